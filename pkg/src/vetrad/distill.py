"""Teacher/student label distillation with soft pseudo-labels.

The student trains on hand-labeled images plus report-labeled images whose
targets blend the teacher's soft pseudo-labels with the tri-state report
labels: blended = lambda * pseudo + (1 - lambda) * target, where target is
0.5 for uncertain report labels and 0/1 otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .domain import TriStateLabel
from .models import MlpBackend, NoiseSpec, NO_NOISE
from .train import LabeledSet, TrainConfig, TrainResult, train_model


class DistillationError(RuntimeError):
    pass


@dataclass(frozen=True)
class BlendConfig:
    lam: float = 0.5  # pseudo-label weight; the paper-silent default, recorded in run metadata
    uncertain_fill: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError("lambda must lie in [0, 1]")


def blend_scalar(pseudo: float, nlp: TriStateLabel, cfg: BlendConfig) -> float:
    """Blend one pseudo-label probability with one tri-state report label."""
    if nlp is TriStateLabel.UNCERTAIN:
        target = cfg.uncertain_fill
    else:
        target = nlp.to_float()
    return cfg.lam * pseudo + (1.0 - cfg.lam) * target


def blend(
    pseudo: Sequence[float],
    nlp: Sequence[TriStateLabel | None],
    cfg: BlendConfig = BlendConfig(),
) -> tuple[np.ndarray, np.ndarray]:
    """Vector blend; a None report label masks that finding entirely.

    Returns (blended targets, mask).
    """
    if len(pseudo) != len(nlp):
        raise ValueError("pseudo and report label vectors differ in length")
    out = np.zeros(len(pseudo))
    mask = np.zeros(len(pseudo), dtype=bool)
    for i, (p, label) in enumerate(zip(pseudo, nlp)):
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"pseudo label {p} outside [0, 1]")
        if label is None:
            continue
        out[i] = blend_scalar(float(p), label, cfg)
        mask[i] = True
    return out, mask


def infer_pseudo_labels(teacher: MlpBackend, pixels: np.ndarray) -> np.ndarray:
    """Noise-free teacher inference over a batch of images."""
    if not teacher.trained:
        raise DistillationError("teacher must be trained before inference")
    probs, _ = teacher.forward(pixels, NO_NOISE)
    return probs


@dataclass
class PseudoLabeledSet:
    """Report-labeled images with teacher pseudo-labels and blended targets."""

    pixels: np.ndarray
    nlp_labels: list[list[TriStateLabel | None]]  # per image, per finding
    pseudo: np.ndarray = field(default=None)  # type: ignore[assignment]
    blended: np.ndarray = field(default=None)  # type: ignore[assignment]
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]
    ids: tuple[str, ...] = ()

    def __len__(self) -> int:
        return int(self.pixels.shape[0])

    def to_labeled_set(self) -> LabeledSet:
        if self.blended is None:
            raise DistillationError("call build() before training on pseudo labels")
        return LabeledSet(self.pixels, self.blended, self.mask, self.ids)


def build_pseudo_set(
    teacher: MlpBackend,
    pixels: np.ndarray,
    nlp_labels: list[list[TriStateLabel | None]],
    cfg: BlendConfig = BlendConfig(),
    ids: tuple[str, ...] = (),
) -> PseudoLabeledSet:
    pseudo = infer_pseudo_labels(teacher, pixels)
    blended = np.zeros_like(pseudo)
    mask = np.zeros(pseudo.shape, dtype=bool)
    for i, labels in enumerate(nlp_labels):
        blended[i], mask[i] = blend(pseudo[i], labels, cfg)
    return PseudoLabeledSet(
        pixels=pixels, nlp_labels=nlp_labels, pseudo=pseudo,
        blended=blended, mask=mask, ids=ids,
    )


def train_student(
    student: MlpBackend,
    teacher: MlpBackend,
    hand_labeled: LabeledSet,
    pseudo_set: PseudoLabeledSet,
    noise: NoiseSpec = NO_NOISE,
    cfg: TrainConfig = TrainConfig(),
    val_data: LabeledSet | None = None,
) -> TrainResult:
    """Train the student on hand labels plus blended pseudo-labels.

    The objective sums the mean masked BCE of each set (each term averaged
    within its own set); the student must be equal-or-larger than the teacher
    by parameter count.
    """
    if student.capacity < teacher.capacity:
        raise DistillationError(
            f"student capacity {student.capacity} smaller than teacher {teacher.capacity}"
        )
    if len(hand_labeled) == 0:
        raise DistillationError("hand-labeled set is empty")
    extra = pseudo_set.to_labeled_set() if len(pseudo_set) else None
    return train_model(
        student, hand_labeled, noise, cfg, val_data=val_data, extra_data=extra
    )


@dataclass
class DistillationRun:
    """One full teacher -> pseudo-label -> student pass, with an audit trail."""

    teacher: MlpBackend
    student: MlpBackend
    blend_cfg: BlendConfig
    events: list[dict] = field(default_factory=list)

    def metadata(self) -> dict:
        return {
            "lambda": self.blend_cfg.lam,
            "teacher": self.teacher.descriptor(),
            "student": self.student.descriptor(),
            "events": list(self.events),
        }


def run_distillation(
    teacher: MlpBackend,
    student: MlpBackend,
    hand_labeled: LabeledSet,
    unlabeled_pixels: np.ndarray,
    nlp_labels: list[list[TriStateLabel | None]],
    noise: NoiseSpec = NO_NOISE,
    train_cfg: TrainConfig = TrainConfig(),
    blend_cfg: BlendConfig = BlendConfig(),
    train_teacher: bool = True,
) -> DistillationRun:
    """Full procedure: (optionally) train teacher, pseudo-label, blend, train student."""
    run = DistillationRun(teacher=teacher, student=student, blend_cfg=blend_cfg)
    if train_teacher:
        train_model(teacher, hand_labeled, noise, train_cfg)
        run.events.append({"event": "teacher_trained"})
    pseudo_set = build_pseudo_set(teacher, unlabeled_pixels, nlp_labels, blend_cfg)
    run.events.append({"event": "pseudo_labels_inferred", "count": len(pseudo_set)})
    train_student(student, teacher, hand_labeled, pseudo_set, noise, train_cfg)
    run.events.append({"event": "student_trained"})
    return run


def iterate(
    previous: DistillationRun,
    new_student: MlpBackend,
    new_hand_labeled: LabeledSet,
    unlabeled_pixels: np.ndarray,
    nlp_labels: list[list[TriStateLabel | None]],
    noise: NoiseSpec = NO_NOISE,
    train_cfg: TrainConfig = TrainConfig(),
    min_new_labels: int = 1,
) -> DistillationRun:
    """Promote the previous student to teacher and redo the process without
    retraining the teacher."""
    if not previous.student.trained:
        raise DistillationError("previous student must be trained")
    if len(new_hand_labeled) < min_new_labels:
        raise DistillationError(
            "significant amount of new single-labeled data required "
            f"(got {len(new_hand_labeled)}, need >= {min_new_labels})"
        )
    run = run_distillation(
        teacher=previous.student,
        student=new_student,
        hand_labeled=new_hand_labeled,
        unlabeled_pixels=unlabeled_pixels,
        nlp_labels=nlp_labels,
        noise=noise,
        train_cfg=train_cfg,
        blend_cfg=previous.blend_cfg,
        train_teacher=False,
    )
    run.events = previous.events + run.events
    return run
