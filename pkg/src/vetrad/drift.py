"""Covariate-shift monitoring via autoencoder reconstruction error.

The detector consumes images only, never labels: a dense autoencoder is fit on
dev-time data, production images are reconstructed, and per-week error
quantiles plus a two-sample KS test against the dev baseline decide drift.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
from scipy import stats

QUANTILES = (5, 25, 50, 75, 95)
DEFAULT_ALPHA = 0.01
MIN_SAMPLE = 20


class DriftError(RuntimeError):
    pass


@dataclass(frozen=True)
class AutoencoderConfig:
    latent_dim: int = 32
    learning_rate: float = 0.05
    max_epochs: int = 30
    early_stop_patience: int = 2
    batch_size: int = 64
    holdout_fraction: float = 0.1
    seed: int = 0


@dataclass
class Autoencoder:
    """Dense encoder/decoder (flattened input -> latent -> sigmoid output)."""

    input_shape: tuple[int, int]
    latent_dim: int
    _params: dict = field(default_factory=dict, repr=False)
    loss_history: list[float] = field(default_factory=list)
    trained: bool = False

    def __post_init__(self) -> None:
        if not self._params:
            d = self.input_shape[0] * self.input_shape[1]
            rng = np.random.default_rng(0)
            self._params = {
                "we": rng.normal(0, 1.0 / np.sqrt(d), (d, self.latent_dim)),
                "be": np.zeros(self.latent_dim),
                "wd": rng.normal(0, 1.0 / np.sqrt(self.latent_dim), (self.latent_dim, d)),
                "bd": np.zeros(d),
            }

    def _flatten(self, pixels: np.ndarray) -> np.ndarray:
        x = np.asarray(pixels, dtype=float)
        if x.ndim == 2:
            x = x[None]
        return x.reshape(x.shape[0], -1)

    def reconstruct(self, pixels: np.ndarray) -> np.ndarray:
        x = self._flatten(pixels)
        p = self._params
        h = np.tanh(x @ p["we"] + p["be"])
        z = h @ p["wd"] + p["bd"]
        out = 1.0 / (1.0 + np.exp(-np.clip(z, -50, 50)))
        return out.reshape((-1, *self.input_shape))

    def _step(self, x: np.ndarray, lr: float) -> None:
        p = self._params
        h_pre = x @ p["we"] + p["be"]
        h = np.tanh(h_pre)
        z = h @ p["wd"] + p["bd"]
        y = 1.0 / (1.0 + np.exp(-np.clip(z, -50, 50)))
        dz = 2.0 * (y - x) * y * (1.0 - y) / x.size
        gwd = h.T @ dz
        gbd = dz.sum(axis=0)
        dh = dz @ p["wd"].T * (1.0 - h**2)
        gwe = x.T @ dh
        gbe = dh.sum(axis=0)
        p["wd"] -= lr * gwd
        p["bd"] -= lr * gbd
        p["we"] -= lr * gwe
        p["be"] -= lr * gbe


def reconstruction_error(ae: Autoencoder, pixels: np.ndarray) -> float:
    """Mean squared pixel error of the reconstruction; >= 0, 0 iff exact."""
    x = np.asarray(pixels, dtype=float)
    if x.shape != ae.input_shape:
        raise DriftError(f"image shape {x.shape} != autoencoder input {ae.input_shape}")
    recon = ae.reconstruct(x)[0]
    return float(np.mean((x - recon) ** 2))


def batch_errors(ae: Autoencoder, pixels: np.ndarray) -> np.ndarray:
    x = np.asarray(pixels, dtype=float)
    recon = ae.reconstruct(x)
    return np.mean((x - recon) ** 2, axis=(1, 2))


def train_autoencoder(
    images: np.ndarray, config: AutoencoderConfig = AutoencoderConfig()
) -> tuple[Autoencoder, np.ndarray]:
    """Fit the autoencoder by mini-batch gradient descent with early stopping;
    returns it with a held-out baseline error sample."""
    x = np.asarray(images, dtype=float)
    if x.ndim != 3:
        raise DriftError("expected a batch of 2-D images")
    if len(x) < config.latent_dim * 10:
        raise DriftError(
            f"need at least {config.latent_dim * 10} images, got {len(x)}"
        )
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(x))
    n_hold = max(1, int(round(len(x) * config.holdout_fraction)))
    hold, trainset = x[order[:n_hold]], x[order[n_hold:]]
    ae = Autoencoder(input_shape=x.shape[1:], latent_dim=config.latent_dim)
    flat = trainset.reshape(len(trainset), -1)
    best = float("inf")
    best_snapshot = {k: v.copy() for k, v in ae._params.items()}
    strikes = 0
    for epoch in range(config.max_epochs):
        perm = rng.permutation(len(flat))
        for start in range(0, len(flat), config.batch_size):
            ae._step(flat[perm[start : start + config.batch_size]], config.learning_rate)
        loss = float(np.mean(batch_errors(ae, hold)))
        if not np.isfinite(loss):
            raise DriftError(f"training diverged at epoch {epoch + 1}")
        prev = ae.loss_history[-1] if ae.loss_history else None
        ae.loss_history.append(loss)
        if loss < best:
            best = loss
            best_snapshot = {k: v.copy() for k, v in ae._params.items()}
        strikes = strikes + 1 if (prev is not None and loss >= prev) else 0
        if strikes >= config.early_stop_patience:
            break
    ae._params = best_snapshot
    ae.trained = True
    return ae, batch_errors(ae, hold)


@dataclass(frozen=True)
class ReconstructionRecord:
    image_id: str
    organization_id: str
    timestamp: float  # unix seconds, UTC
    l2_error: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.l2_error) or self.l2_error < 0:
            raise ValueError("l2_error must be finite and non-negative")

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, line: str) -> "ReconstructionRecord":
        return cls(**json.loads(line))


def _quantiles(values: Sequence[float]) -> dict[str, float]:
    arr = np.sort(np.asarray(values, dtype=float))
    return {f"p{q}": float(np.percentile(arr, q)) for q in QUANTILES}


@dataclass
class DriftVerdict:
    window_id: str  # ISO week, e.g. "2026-W30"
    baseline_quantiles: dict[str, float]
    window_quantiles: dict[str, float]
    statistic: float
    p_value: float
    drifted: bool
    inconclusive: bool = False
    count: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def iso_week(timestamp: float) -> str:
    d = dt.datetime.fromtimestamp(timestamp, tz=dt.timezone.utc)
    year, week, _ = d.isocalendar()
    return f"{year}-W{week:02d}"


def weekly_quantiles(records: Sequence[ReconstructionRecord]) -> list[dict]:
    """Per-ISO-week error quantiles and counts, weeks ascending."""
    by_week: dict[str, list[float]] = {}
    for rec in records:
        by_week.setdefault(iso_week(rec.timestamp), []).append(rec.l2_error)
    out = []
    for week in sorted(by_week):
        errs = by_week[week]
        row = {"window_id": week, "count": len(errs)}
        row.update(_quantiles(errs))
        out.append(row)
    return out


def drift_test(
    baseline: Sequence[float],
    window: Sequence[float],
    window_id: str = "",
    alpha: float = DEFAULT_ALPHA,
) -> DriftVerdict:
    """Two-sample KS test plus a median-outside-baseline-band rule."""
    base = np.asarray(baseline, dtype=float)
    win = np.asarray(window, dtype=float)
    bq = _quantiles(base) if len(base) else {}
    wq = _quantiles(win) if len(win) else {}
    if len(base) < MIN_SAMPLE or len(win) < MIN_SAMPLE:
        return DriftVerdict(
            window_id=window_id, baseline_quantiles=bq, window_quantiles=wq,
            statistic=float("nan"), p_value=float("nan"),
            drifted=False, inconclusive=True, count=len(win),
        )
    ks = stats.ks_2samp(base, win, method="asymp")
    median_out = not (bq["p5"] <= wq["p50"] <= bq["p95"])
    return DriftVerdict(
        window_id=window_id, baseline_quantiles=bq, window_quantiles=wq,
        statistic=float(ks.statistic), p_value=float(ks.pvalue),
        drifted=bool(ks.pvalue < alpha or median_out), count=len(win),
    )


def weekly_verdicts(
    baseline: Sequence[float],
    records: Sequence[ReconstructionRecord],
    alpha: float = DEFAULT_ALPHA,
) -> list[DriftVerdict]:
    by_week: dict[str, list[float]] = {}
    for rec in records:
        by_week.setdefault(iso_week(rec.timestamp), []).append(rec.l2_error)
    return [
        drift_test(baseline, by_week[w], window_id=w, alpha=alpha)
        for w in sorted(by_week)
    ]


def org_diversity_analysis(
    records: Sequence[ReconstructionRecord],
    org_counts: Sequence[int],
    seed: int = 0,
) -> list[dict]:
    """Error quantiles over records drawn from k randomly chosen organizations,
    for each k in org_counts."""
    orgs = sorted({r.organization_id for r in records})
    if not org_counts or max(org_counts) > len(orgs):
        raise DriftError(
            f"need at least {max(org_counts) if org_counts else 1} distinct "
            f"organizations, have {len(orgs)}"
        )
    rng = np.random.default_rng(seed)
    rows = []
    for k in org_counts:
        chosen = set(rng.choice(orgs, size=k, replace=False))
        errs = [r.l2_error for r in records if r.organization_id in chosen]
        row = {"n_orgs": int(k), "count": len(errs)}
        row.update(_quantiles(errs))
        rows.append(row)
    return rows
