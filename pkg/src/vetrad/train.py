"""Noised multi-label trainer with early stopping, plus the data-scaling sweep."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import metrics
from .models import MlpBackend, NoiseSpec, NO_NOISE, masked_bce, masked_bce_grad_logits


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 30
    early_stop_patience: int = 2  # stop after this many non-decreasing val epochs
    batch_size: int = 64
    learning_rate: float = 0.5
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")


@dataclass
class LabeledSet:
    """Images with soft targets in [0, 1] and a mask of present labels."""

    pixels: np.ndarray  # (n, h, w)
    targets: np.ndarray  # (n, k) in [0, 1]
    mask: np.ndarray  # (n, k) boolean; False = label absent (masked from loss)
    ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=float)
        if self.pixels.shape[0] != self.targets.shape[0]:
            raise ValueError("pixels/targets length mismatch")
        if self.targets.shape != self.mask.shape:
            raise ValueError("targets/mask shape mismatch")

    def __len__(self) -> int:
        return int(self.pixels.shape[0])

    def subset(self, idx: np.ndarray) -> "LabeledSet":
        ids = tuple(self.ids[i] for i in idx) if self.ids else ()
        return LabeledSet(self.pixels[idx], self.targets[idx], self.mask[idx], ids)


def stopping_epoch(val_losses: Sequence[float], patience: int = 2, max_epochs: int = 30) -> tuple[int, int]:
    """(stop_epoch, best_epoch), 1-based, for a validation-loss sequence.

    Stops once the loss has failed to decrease `patience` epochs in a row.
    """
    strikes = 0
    best_epoch = 1
    best = float("inf")
    for epoch, loss in enumerate(val_losses, start=1):
        if loss < best:
            best = loss
            best_epoch = epoch
        if epoch > 1 and loss >= val_losses[epoch - 2]:
            strikes += 1
        else:
            strikes = 0
        if strikes >= patience or epoch >= max_epochs:
            return epoch, best_epoch
    return len(val_losses), best_epoch


@dataclass
class TrainResult:
    backend: MlpBackend
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0


def _epoch_losses(backend: MlpBackend, data: LabeledSet) -> float:
    probs, _ = backend.forward(data.pixels, NO_NOISE)
    return masked_bce(probs, data.targets, data.mask)


def _split_validation(data: LabeledSet, cfg: TrainConfig) -> tuple[LabeledSet, LabeledSet]:
    n = len(data)
    n_val = max(1, int(round(n * cfg.val_fraction)))
    if n_val >= n:
        raise TrainingError("not enough data to hold out a validation split")
    rng = np.random.default_rng(cfg.seed + 7919)
    order = rng.permutation(n)
    return data.subset(order[n_val:]), data.subset(order[:n_val])


def train_model(
    backend: MlpBackend,
    data: LabeledSet,
    noise: NoiseSpec = NO_NOISE,
    cfg: TrainConfig = TrainConfig(),
    val_data: LabeledSet | None = None,
    extra_data: LabeledSet | None = None,
) -> TrainResult:
    """Minimize mean masked BCE by mini-batch SGD with early stopping.

    `extra_data`, when given, contributes its own mean-loss term per step
    (the two-set objective used by distillation); parameters from the best
    validation epoch are restored before returning.
    """
    if len(data) == 0:
        raise TrainingError("training set is empty")
    if data.mask.sum() == 0:
        raise TrainingError("no supervised signal: all labels masked")
    if val_data is None:
        data, val_data = _split_validation(data, cfg)
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(backend=backend)
    best_snapshot = backend.snapshot()
    best_val = float("inf")
    strikes = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(data))
        for start in range(0, len(data), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = data.subset(idx)
            if batch.mask.sum() == 0:
                continue
            probs, cache = backend.forward(batch.pixels, noise, rng)
            dlogits = masked_bce_grad_logits(probs, batch.targets, batch.mask)
            grads = backend.backward(cache, dlogits)
            if extra_data is not None and len(extra_data) > 0:
                eidx = rng.integers(0, len(extra_data), size=min(cfg.batch_size, len(extra_data)))
                ebatch = extra_data.subset(eidx)
                if ebatch.mask.sum() > 0:
                    eprobs, ecache = backend.forward(ebatch.pixels, noise, rng)
                    edlogits = masked_bce_grad_logits(eprobs, ebatch.targets, ebatch.mask)
                    egrads = backend.backward(ecache, edlogits)
                    grads = {k: grads[k] + egrads[k] for k in grads}
            backend.apply_gradients(grads, cfg.learning_rate)
        train_loss = _epoch_losses(backend, data)
        val_loss = _epoch_losses(backend, val_data)
        if not np.isfinite(train_loss) or not np.isfinite(val_loss):
            raise TrainingError(
                f"loss diverged at epoch {epoch}: train={train_loss} val={val_loss}"
            )
        result.train_losses.append(train_loss)
        result.val_losses.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_snapshot = backend.snapshot()
            result.best_epoch = epoch
        if epoch > 1 and val_loss >= result.val_losses[-2]:
            strikes += 1
        else:
            strikes = 0
        result.stopped_epoch = epoch
        if strikes >= cfg.early_stop_patience:
            break
    backend.restore(best_snapshot)
    backend.trained = True
    return result


def scaling_sweep(
    backend_factory: Callable[[], MlpBackend],
    train_sets: Sequence[LabeledSet],
    test_set: LabeledSet,
    noise: NoiseSpec = NO_NOISE,
    cfg: TrainConfig = TrainConfig(),
) -> list[dict]:
    """Train one model per nested subset size and evaluate on a fixed test set.

    Returns rows of {size, roc_auc, pr_auc} (means over findings with both
    classes present in the test labels).
    """
    sizes = [len(s) for s in train_sets]
    if sizes != sorted(sizes):
        raise ValueError("train set sizes must be ascending")
    test_ids = set(test_set.ids)
    rows: list[dict] = []
    for subset in train_sets:
        if subset.ids and test_ids & set(subset.ids):
            raise ValueError("train/test overlap detected")
        backend = backend_factory()
        train_model(backend, subset, noise, cfg)
        probs, _ = backend.forward(test_set.pixels, NO_NOISE)
        rocs, prs = [], []
        for k in range(test_set.targets.shape[1]):
            present = test_set.mask[:, k] > 0
            y = test_set.targets[present, k].round().astype(int)
            if len(y) == 0 or y.sum() in (0, len(y)):
                continue
            s = probs[present, k]
            rocs.append(metrics.auroc(s, y))
            prs.append(metrics.pr_auc(s, y))
        rows.append(
            {
                "size": len(subset),
                "roc_auc": float(np.mean(rocs)) if rocs else float("nan"),
                "pr_auc": float(np.mean(prs)) if prs else float("nan"),
            }
        )
    return rows
