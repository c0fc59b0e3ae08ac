"""Orientation normalization stage.

Canonical pose is signalled by the corner marker the synthetic generator
stamps: the brightest block top-left and a dimmer block top-right. Each of the
six candidate corrections is applied and scored; the correction whose output
looks most canonical wins, with "none" preferred on ties so normalization is
idempotent.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

MARKER_SIZE = 6

# candidate corrections in tie-break order; rot90 undoes a single
# counter-clockwise quarter turn of the canonical image
TRANSFORMS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "none": lambda px: px,
    "rot90": lambda px: np.rot90(px, -1),
    "rot180": lambda px: np.rot90(px, 2),
    "rot270": lambda px: np.rot90(px, 1),
    "hflip": lambda px: px[:, ::-1],
    "vflip": lambda px: px[::-1, :],
}


def pose_score(px: np.ndarray) -> float:
    """How canonical the pose looks: bright top-left, dimmer top-right."""
    m = MARKER_SIZE
    tl = float(px[:m, :m].mean())
    tr = float(px[:m, -m:].mean())
    bl = float(px[-m:, :m].mean())
    br = float(px[-m:, -m:].mean())
    return 2.0 * tl + tr - bl - br


def normalize_orientation(px: np.ndarray) -> tuple[np.ndarray, str]:
    """Return (normalized pixels, name of the applied correction)."""
    best_name = "none"
    best_score = -np.inf
    for name, fn in TRANSFORMS.items():
        score = pose_score(fn(px))
        if score > best_score + 1e-12:
            best_score = score
            best_name = name
    out = TRANSFORMS[best_name](px)
    return np.ascontiguousarray(out), best_name
