"""Per-finding probability calibration via a piecewise-linear transform.

The operating point for each finding is chosen to maximize Youden's J
(sensitivity + specificity - 1) on a validation set; the transform maps that
point to 0.5 while fixing 0 and 1 and preserving ranks.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

OPT_CLAMP = 1e-4  # keeps the transform's denominators away from zero


class CalibrationError(ValueError):
    pass


def piecewise_transform(x: float, opt: float) -> float:
    """Monotone map sending `opt` to 0.5 with fixed endpoints 0 and 1."""
    if not (0.0 < opt < 1.0):
        raise CalibrationError(f"operating point must lie in (0, 1), got {opt}")
    if x <= opt:
        return x / (2.0 * opt)
    return 1.0 - (1.0 - x) / (2.0 * (1.0 - opt))


def _youden_j(scores: np.ndarray, labels: np.ndarray, threshold: float) -> float:
    pred = scores >= threshold
    pos = labels == 1
    sens = np.sum(pred & pos) / np.sum(pos)
    spec = np.sum(~pred & ~pos) / np.sum(~pos)
    return float(sens + spec - 1.0)


def fit_opt(pairs: Sequence[tuple[float, int]]) -> tuple[float, float]:
    """Operating point maximizing Youden's J; returns (opt, J at opt).

    Candidate thresholds are midpoints between consecutive sorted unique
    scores plus clamped boundary candidates; ties break toward 0.5.
    """
    scores = np.asarray([p[0] for p in pairs], dtype=float)
    labels = np.asarray([p[1] for p in pairs], dtype=int)
    if len(scores) == 0 or labels.sum() == 0 or labels.sum() == len(labels):
        raise CalibrationError("Youden undefined: need at least one of each class")
    uniq = np.unique(scores)
    candidates = [(a + b) / 2.0 for a, b in zip(uniq[:-1], uniq[1:])]
    candidates.append(uniq[0] / 2.0)  # everything positive
    candidates.append((uniq[-1] + 1.0) / 2.0)  # everything below max negative
    candidates = [min(max(c, OPT_CLAMP), 1.0 - OPT_CLAMP) for c in candidates]
    best = min(
        candidates,
        key=lambda c: (-_youden_j(scores, labels, c), abs(c - 0.5), c),
    )
    best_j = _youden_j(scores, labels, best)
    if best_j <= 0:
        warnings.warn("no threshold achieves positive Youden's J", stacklevel=2)
    return best, best_j


@dataclass(frozen=True)
class CalibrationParams:
    """Per-finding operating points, persisted alongside a model version."""

    opt: Mapping[str, float]
    fitted_on: str = ""
    youden_j: Mapping[str, float] = field(default_factory=dict)
    model_version: str = ""

    def __post_init__(self) -> None:
        for fid, o in self.opt.items():
            if not (0.0 < o < 1.0):
                raise CalibrationError(f"opt for {fid} must lie in (0, 1), got {o}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "model_version": self.model_version,
                "fitted_on": self.fitted_on,
                "opt": dict(self.opt),
                "youden_j": dict(self.youden_j),
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "CalibrationParams":
        doc = json.loads(text)
        return cls(
            opt=doc["opt"],
            fitted_on=doc.get("fitted_on", ""),
            youden_j=doc.get("youden_j", {}),
            model_version=doc.get("model_version", ""),
        )


def fit_params(
    scores: Mapping[str, Sequence[tuple[float, int]]],
    fitted_on: str = "",
    model_version: str = "",
) -> CalibrationParams:
    """Fit one operating point per finding from (score, label) pairs."""
    opt: dict[str, float] = {}
    j: dict[str, float] = {}
    for fid, pairs in scores.items():
        opt[fid], j[fid] = fit_opt(pairs)
    return CalibrationParams(
        opt=opt, youden_j=j, fitted_on=fitted_on, model_version=model_version
    )


def calibrate_vector(
    raw: Mapping[str, float] | Sequence[float],
    params: CalibrationParams,
    finding_ids: Sequence[str] | None = None,
) -> dict[str, float]:
    """Apply the per-finding transform to a raw soft-label vector."""
    if isinstance(raw, Mapping):
        items = raw.items()
    else:
        if finding_ids is None:
            raise CalibrationError("finding_ids required for positional vectors")
        if len(finding_ids) != len(raw):
            raise CalibrationError("vector length does not match finding ids")
        items = zip(finding_ids, raw)
    out: dict[str, float] = {}
    for fid, value in items:
        if fid not in params.opt:
            raise CalibrationError(f"no calibration params for finding {fid}")
        out[fid] = piecewise_transform(float(value), params.opt[fid])
    return out
