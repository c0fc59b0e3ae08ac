"""Image validity gate: decides whether an image is worth scoring.

Desk-scale heuristic stand-in for a trained accept/reject classifier, kept
behind the same accept(pixels) -> (bool, reason) interface so a model can be
plugged in later.
"""

from __future__ import annotations

import numpy as np

from ..ingest import histogram_entropy

MIN_ASPECT = 0.5
MAX_ASPECT = 2.0


class HeuristicGate:
    def __init__(self, entropy_threshold: float = 1.0):
        if entropy_threshold < 0:
            raise ValueError("entropy_threshold must be non-negative")
        self.entropy_threshold = entropy_threshold

    def accept(self, pixels: np.ndarray) -> tuple[bool, str]:
        h, w = pixels.shape
        aspect = w / h
        if not MIN_ASPECT <= aspect <= MAX_ASPECT:
            return False, f"aspect ratio {aspect:.2f} outside [{MIN_ASPECT}, {MAX_ASPECT}]"
        entropy = histogram_entropy(pixels)
        if entropy < self.entropy_threshold:
            return False, f"entropy {entropy:.3f} below threshold {self.entropy_threshold}"
        return True, "ok"
