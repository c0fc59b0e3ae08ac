"""Dataset filtering: duplicates, low-complexity images, gate rejects, and
oversized studies."""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .domain import MAX_STUDY_IMAGES, ImageRecord

DEFAULT_ENTROPY_THRESHOLD = 1.0  # bits


@dataclass
class FilterReport:
    input_count: int = 0
    removed_duplicates: int = 0
    removed_low_complexity: int = 0
    removed_gate: int = 0
    removed_oversized_study: int = 0
    kept_count: int = 0

    def reconciles(self) -> bool:
        removed = (
            self.removed_duplicates
            + self.removed_low_complexity
            + self.removed_gate
            + self.removed_oversized_study
        )
        return self.kept_count + removed == self.input_count

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def histogram_entropy(pixels: np.ndarray, bins: int = 256) -> float:
    """Shannon entropy (bits) of the intensity histogram."""
    counts, _ = np.histogram(pixels, bins=bins, range=(0.0, 1.0))
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum())


def _content_hash(pixels: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(pixels).tobytes()).hexdigest()


def filter_images(
    images: Sequence[ImageRecord],
    gate: Callable[[ImageRecord], bool] | None = None,
    entropy_threshold: float = DEFAULT_ENTROPY_THRESHOLD,
) -> tuple[list[ImageRecord], FilterReport]:
    """Apply the ingest filters in order: dedup, entropy, gate, study size.

    Exact-duplicate pixel buffers keep their first occurrence; studies whose
    surviving image count exceeds the cap are removed entirely.
    """
    if entropy_threshold < 0:
        raise ValueError("entropy_threshold must be >= 0")
    report = FilterReport(input_count=len(images))
    seen: set[str] = set()
    survivors: list[ImageRecord] = []
    for img in images:
        digest = _content_hash(img.pixels)
        if digest in seen:
            report.removed_duplicates += 1
            continue
        seen.add(digest)
        if histogram_entropy(img.pixels) < entropy_threshold:
            report.removed_low_complexity += 1
            continue
        if gate is not None and not gate(img):
            report.removed_gate += 1
            continue
        survivors.append(img)
    study_sizes = Counter(img.study_id for img in survivors)
    kept = [img for img in survivors if study_sizes[img.study_id] <= MAX_STUDY_IMAGES]
    report.removed_oversized_study = len(survivors) - len(kept)
    report.kept_count = len(kept)
    return kept, report
