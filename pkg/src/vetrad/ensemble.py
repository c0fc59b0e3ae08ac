"""Ensemble averaging of calibrated members, best-subset selection, and
study-level fusion."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import metrics
from .calib import CalibrationParams, piecewise_transform
from .models import MlpBackend

MAX_SUBSET_MEMBERS = 12  # exhaustive-search bound
MIN_SUBSET_POSITIVES = 5  # findings below this positive count are skipped


class EnsembleError(ValueError):
    pass


@dataclass
class Ensemble:
    """Ordered calibrated members with an active-subset mask."""

    members: list[tuple[MlpBackend, CalibrationParams]]
    finding_ids: tuple[str, ...]
    subset_mask: tuple[bool, ...] = ()
    version: str = "1"

    def __post_init__(self) -> None:
        if not self.members:
            raise EnsembleError("ensemble needs at least one member")
        if not self.subset_mask:
            self.subset_mask = tuple(True for _ in self.members)
        if len(self.subset_mask) != len(self.members):
            raise EnsembleError("subset mask length mismatch")
        if not any(self.subset_mask):
            raise EnsembleError("ensemble needs at least one active member")

    def _member_scores(self, backend: MlpBackend, params: CalibrationParams, pixels: np.ndarray) -> np.ndarray:
        raw = backend.predict(pixels)
        opts = np.array([params.opt[f] for f in self.finding_ids])
        return _piecewise_vec(raw, opts)

    def predict(self, pixels: np.ndarray) -> np.ndarray:
        """Arithmetic mean of the active members' calibrated outputs."""
        active = [m for m, on in zip(self.members, self.subset_mask) if on]
        stacked = np.stack(
            [self._member_scores(b, p, pixels) for b, p in active]
        )
        return stacked.mean(axis=0)

    def manifest(self) -> dict:
        return {
            "version": self.version,
            "members": [b.descriptor() for b, _ in self.members],
            "subset_mask": list(self.subset_mask),
            "finding_ids": list(self.finding_ids),
        }

    def manifest_json(self) -> str:
        return json.dumps(self.manifest(), indent=2)


def _piecewise_vec(raw: np.ndarray, opts: np.ndarray) -> np.ndarray:
    low = raw / (2.0 * opts)
    high = 1.0 - (1.0 - raw) / (2.0 * (1.0 - opts))
    return np.where(raw <= opts, low, high)


def _mean_auroc(scores: np.ndarray, targets: np.ndarray, mask: np.ndarray) -> float:
    """Unweighted mean AUROC over findings with both classes present."""
    vals = []
    for k in range(targets.shape[1]):
        present = mask[:, k] > 0
        y = targets[present, k].round().astype(int)
        if y.sum() < MIN_SUBSET_POSITIVES or y.sum() == len(y) or len(y) == 0:
            continue
        vals.append(metrics.auroc(scores[present, k], y))
    if not vals:
        raise EnsembleError("no finding has both classes in the validation set")
    return float(np.mean(vals))


def best_subset(
    member_scores: Sequence[np.ndarray],
    targets: np.ndarray,
    mask: np.ndarray,
) -> tuple[bool, ...]:
    """Exhaustively search all non-empty member subsets for max mean AUROC.

    `member_scores[i]` holds member i's calibrated scores on the validation
    set, shape (n, k).  Ties break toward larger subsets, then lexicographic.
    """
    k = len(member_scores)
    if k == 0:
        raise EnsembleError("no candidate members")
    if k > MAX_SUBSET_MEMBERS:
        raise EnsembleError(f"exhaustive search bounded at {MAX_SUBSET_MEMBERS} members")
    best_mask: tuple[bool, ...] | None = None
    best_key: tuple | None = None
    for bits in itertools.product((False, True), repeat=k):
        if not any(bits):
            continue
        avg = np.mean([s for s, on in zip(member_scores, bits) if on], axis=0)
        score = _mean_auroc(avg, targets, mask)
        # ties: larger subsets first, then earlier members preferred
        key = (score, sum(bits), bits)
        if best_key is None or key > best_key:
            best_key = key
            best_mask = bits
    assert best_mask is not None
    return best_mask


def fuse_study(per_image_vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Study-level fusion: per-finding maximum across the study's images."""
    if len(per_image_vectors) == 0:
        raise EnsembleError("cannot fuse an empty study")
    return np.max(np.stack([np.asarray(v, dtype=float) for v in per_image_vectors]), axis=0)
