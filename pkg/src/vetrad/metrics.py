"""Evaluation metrics and consensus ground-truth construction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .domain import TriStateLabel

MIN_POSITIVES = 5


class MetricError(ValueError):
    """Raised when a metric is undefined for the given inputs."""


def _as_arrays(scores: Sequence[float], labels: Sequence[int]):
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    if s.shape != y.shape or s.ndim != 1:
        raise MetricError("scores and labels must be 1-D and the same length")
    if not np.isin(y, (0, 1)).all():
        raise MetricError("labels must be binary")
    return s, y


def _require_both_classes(y: np.ndarray) -> None:
    if y.sum() == 0 or y.sum() == len(y):
        raise MetricError("both classes must be present")


def auroc(
    scores: Sequence[float],
    labels: Sequence[int],
    min_positives: int = 0,
) -> float:
    """Area under the ROC curve via the rank statistic with tie correction."""
    s, y = _as_arrays(scores, labels)
    _require_both_classes(y)
    n_pos = int(y.sum())
    if min_positives and n_pos < min_positives:
        raise MetricError(
            f"finding has {n_pos} positives, fewer than the {min_positives} floor"
        )
    ranks = rankdata(s)  # average ranks handle ties
    n_neg = len(y) - n_pos
    pos_rank_sum = ranks[y == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def pr_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Precision-recall AUC by step interpolation over descending scores."""
    s, y = _as_arrays(scores, labels)
    _require_both_classes(y)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    n_pos = y.sum()
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # collapse tied scores to one operating point (the last index of each group)
    distinct = np.r_[s[1:] != s[:-1], True]
    tp, fp = tp[distinct], fp[distinct]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    prev_recall = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev_recall) * precision))


def operating_point(
    scores: Sequence[float],
    labels: Sequence[int],
    threshold: float = 0.6,
) -> tuple[float, float]:
    """(FPR, sensitivity) of the decision rule score >= threshold."""
    s, y = _as_arrays(scores, labels)
    _require_both_classes(y)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    return fp / (fp + tn), tp / (tp + fn)


@dataclass(frozen=True)
class AnnotationMatrix:
    """Per image x finding tri-state labels from several annotators.

    labels[annotator_id][(image_id, finding_id)] -> TriStateLabel; all
    annotators must cover the same (image, finding) cells.
    """

    annotator_ids: tuple[str, ...]
    labels: Mapping[str, Mapping[tuple[str, str], TriStateLabel]]

    def __post_init__(self) -> None:
        keysets = {a: frozenset(self.labels[a]) for a in self.annotator_ids}
        first = next(iter(keysets.values()), frozenset())
        if any(k != first for k in keysets.values()):
            raise ValueError("annotators must cover the same image set")

    @property
    def cells(self) -> frozenset[tuple[str, str]]:
        if not self.annotator_ids:
            return frozenset()
        return frozenset(self.labels[self.annotator_ids[0]])


def majority_vote(
    annotations: AnnotationMatrix,
    exclude: str | None = None,
) -> dict[tuple[str, str], int]:
    """Consensus truth: positive iff strictly more than half vote positive.

    Uncertain counts as not-positive.  `exclude` drops one annotator (used for
    leave-one-out point estimates).
    """
    voters = [a for a in annotations.annotator_ids if a != exclude]
    if len(voters) < 3:
        raise MetricError("majority vote requires at least 3 annotators")
    truth: dict[tuple[str, str], int] = {}
    for cell in annotations.cells:
        positives = sum(
            1 for a in voters if annotations.labels[a][cell] is TriStateLabel.POSITIVE
        )
        truth[cell] = int(positives * 2 > len(voters))
    return truth


def annotator_point_estimates(
    annotations: AnnotationMatrix,
) -> dict[str, tuple[float, float]]:
    """Per-annotator (FPR, sensitivity) against the leave-one-out consensus.

    A rate whose denominator is empty is reported as NaN.
    """
    estimates: dict[str, tuple[float, float]] = {}
    for annot in annotations.annotator_ids:
        truth = majority_vote(annotations, exclude=annot)
        tp = fp = fn = tn = 0
        for cell, t in truth.items():
            pred = annotations.labels[annot][cell] is TriStateLabel.POSITIVE
            if t == 1:
                tp += pred
                fn += not pred
            else:
                fp += pred
                tn += not pred
        fpr = fp / (fp + tn) if (fp + tn) else float("nan")
        sens = tp / (tp + fn) if (tp + fn) else float("nan")
        estimates[annot] = (fpr, sens)
    return estimates


def finding_report(
    scores: Sequence[float],
    labels: Sequence[int],
    threshold: float = 0.6,
    min_positives: int = MIN_POSITIVES,
) -> dict:
    """One Table-style report row: Npositive, AUROC, FPR@t, Sensi@t.

    Findings below the positive-count floor report n/a values.
    """
    _, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos < min_positives or n_pos == len(y):
        return {"n_positive": n_pos, "auroc": None, "fpr": None, "sensitivity": None}
    fpr, sens = operating_point(scores, labels, threshold)
    return {
        "n_positive": n_pos,
        "auroc": auroc(scores, labels),
        "fpr": fpr,
        "sensitivity": sens,
    }
