"""Multi-label model backends: a small MLP and the predictor interface.

The backend contract: predict() maps pixel arrays to one probability per
taxonomy finding and is deterministic given fixed parameters; training noise
(dropout, input jitter, horizontal flip) never applies at inference.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class NoiseSpec:
    """Training-time noise; inference is always noise-free."""

    dropout_rate: float = 0.0
    input_jitter_sigma: float = 0.0
    flip_probability: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.input_jitter_sigma < 0:
            raise ValueError("input_jitter_sigma must be >= 0")
        if not (0.0 <= self.flip_probability <= 1.0):
            raise ValueError("flip_probability must lie in [0, 1]")


NO_NOISE = NoiseSpec()


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def masked_bce(
    probs: np.ndarray, targets: np.ndarray, mask: np.ndarray, eps: float = 1e-7
) -> float:
    """Mean binary cross-entropy over unmasked (image, finding) entries."""
    if mask.sum() == 0:
        raise ValueError("no supervised signal: all labels masked")
    p = np.clip(probs, eps, 1.0 - eps)
    ll = targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p)
    return float(-(ll * mask).sum() / mask.sum())


def masked_bce_grad_logits(
    probs: np.ndarray, targets: np.ndarray, mask: np.ndarray
) -> np.ndarray:
    """Gradient of masked_bce with respect to the logits."""
    return (probs - targets) * mask / mask.sum()


@dataclass
class MlpBackend:
    """Flattened-input MLP with one tanh hidden layer and sigmoid outputs."""

    input_shape: tuple[int, int]
    n_outputs: int
    hidden_units: int = 32
    seed: int = 0
    name: str = "mlp"
    _params: dict = field(default_factory=dict, repr=False)
    trained: bool = False

    def __post_init__(self) -> None:
        if not self._params:
            rng = np.random.default_rng(self.seed)
            d = self.input_shape[0] * self.input_shape[1]
            self._params = {
                "w1": rng.normal(0, 1.0 / np.sqrt(d), (d, self.hidden_units)),
                "b1": np.zeros(self.hidden_units),
                "w2": rng.normal(
                    0, 1.0 / np.sqrt(self.hidden_units), (self.hidden_units, self.n_outputs)
                ),
                "b2": np.zeros(self.n_outputs),
            }

    # -- descriptor ---------------------------------------------------------
    @property
    def capacity(self) -> int:
        return sum(int(p.size) for p in self._params.values())

    def descriptor(self) -> dict:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "hidden_units": self.hidden_units,
            "n_outputs": self.n_outputs,
            "capacity": self.capacity,
        }

    # -- forward ------------------------------------------------------------
    def _flatten(self, pixels: np.ndarray) -> np.ndarray:
        x = np.asarray(pixels, dtype=float)
        if x.ndim == 2:
            x = x[None, :, :]
        return x.reshape(x.shape[0], -1)

    def forward(
        self,
        pixels: np.ndarray,
        noise: NoiseSpec = NO_NOISE,
        rng: np.random.Generator | None = None,
    ) -> tuple[np.ndarray, dict]:
        """Batch forward pass; returns (probabilities, cache for backprop)."""
        x3 = np.asarray(pixels, dtype=float)
        if x3.ndim == 2:
            x3 = x3[None, :, :]
        if rng is None:
            rng = np.random.default_rng(noise.rng_seed)
        if noise.flip_probability > 0:
            flips = rng.random(x3.shape[0]) < noise.flip_probability
            x3 = x3.copy()
            x3[flips] = x3[flips, :, ::-1]
        x = x3.reshape(x3.shape[0], -1)
        if noise.input_jitter_sigma > 0:
            x = x + rng.normal(0, noise.input_jitter_sigma, x.shape)
        p = self._params
        h_pre = x @ p["w1"] + p["b1"]
        h = np.tanh(h_pre)
        if noise.dropout_rate > 0:
            keep = rng.random(h.shape) >= noise.dropout_rate
            h = h * keep / (1.0 - noise.dropout_rate)
        else:
            keep = None
        logits = h @ p["w2"] + p["b2"]
        probs = sigmoid(logits)
        return probs, {"x": x, "h": h, "h_pre": h_pre, "keep": keep}

    def predict(self, pixels: np.ndarray) -> np.ndarray:
        """Deterministic inference, one probability per finding."""
        probs, _ = self.forward(pixels, NO_NOISE)
        return probs if np.asarray(pixels).ndim == 3 else probs[0]

    # -- gradients ----------------------------------------------------------
    def backward(self, cache: dict, dlogits: np.ndarray) -> dict:
        p = self._params
        grads = {
            "w2": cache["h"].T @ dlogits,
            "b2": dlogits.sum(axis=0),
        }
        dh = dlogits @ p["w2"].T
        if cache["keep"] is not None:
            dh = dh * cache["keep"]  # dropout scale folded into h already
        dh_pre = dh * (1.0 - np.tanh(cache["h_pre"]) ** 2)
        grads["w1"] = cache["x"].T @ dh_pre
        grads["b1"] = dh_pre.sum(axis=0)
        return grads

    def apply_gradients(self, grads: dict, learning_rate: float) -> None:
        for k, g in grads.items():
            self._params[k] -= learning_rate * g

    # -- snapshots ----------------------------------------------------------
    def snapshot(self) -> dict:
        return {k: v.copy() for k, v in self._params.items()}

    def restore(self, snap: dict) -> None:
        self._params = {k: v.copy() for k, v in snap.items()}

    # -- persistence --------------------------------------------------------
    def save(self, path: str) -> None:
        """Checkpoint: npz parameter blob plus a JSON descriptor sidecar."""
        with open(path, "wb") as fh:
            np.savez(fh, **self._params)
        desc = dict(self.descriptor(), seed=self.seed, trained=self.trained)
        with open(path + ".json", "w", encoding="utf-8") as fh:
            json.dump(desc, fh, indent=2)

    @classmethod
    def load(cls, path: str) -> "MlpBackend":
        with open(path + ".json", "r", encoding="utf-8") as fh:
            desc = json.load(fh)
        with open(path, "rb") as fh:
            blob = np.load(io.BytesIO(fh.read()))
            params = {k: blob[k] for k in blob.files}
        backend = cls(
            input_shape=tuple(desc["input_shape"]),
            n_outputs=desc["n_outputs"],
            hidden_units=desc["hidden_units"],
            seed=desc.get("seed", 0),
            name=desc.get("name", "mlp"),
            _params=params,
            trained=desc.get("trained", False),
        )
        return backend


def dropout_noise(seed: int = 0) -> NoiseSpec:
    """Default training noise mix used throughout the repo."""
    return NoiseSpec(
        dropout_rate=0.1, input_jitter_sigma=0.02, flip_probability=0.5, rng_seed=seed
    )
