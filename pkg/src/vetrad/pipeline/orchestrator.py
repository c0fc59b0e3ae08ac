"""Model-stage coordinator: orientation normalize, validity gate, predict.

Runs the three stages in order for a single image and reports per-stage
timings. A gate rejection is a valid result; a stage exception is wrapped in
StageError carrying the stage name.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..ensemble import Ensemble
from .gate import HeuristicGate
from .orient import normalize_orientation

STAGES = ("orient", "gate", "predict")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ImageResult:
    request_id: str
    image_id: str
    model_version: str
    orientation_applied: str
    gate_passed: bool
    scores: dict[str, float] | None
    completed_at: float
    gate_reason: str = "ok"
    stage_timings: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.gate_passed != (self.scores is not None):
            raise ValueError("scores must be present iff gate_passed")
        if self.scores is not None:
            for fid, s in self.scores.items():
                if not 0.0 <= s <= 1.0:
                    raise ValueError(f"score for {fid} outside [0, 1]: {s}")

    def to_dict(self) -> dict:
        return {
            "request_id": self.request_id,
            "image_id": self.image_id,
            "model_version": self.model_version,
            "orientation_applied": self.orientation_applied,
            "gate_passed": self.gate_passed,
            "scores": self.scores,
            "completed_at": self.completed_at,
            "gate_reason": self.gate_reason,
        }


class Orchestrator:
    def __init__(self, ensemble: Ensemble, gate: HeuristicGate | None = None):
        self.ensemble = ensemble
        self.gate = gate if gate is not None else HeuristicGate()

    def orchestrate(self, request_id: str, image_id: str, pixels: np.ndarray) -> ImageResult:
        timings: dict[str, float] = {}

        t0 = time.perf_counter()
        try:
            normalized, orientation = normalize_orientation(pixels)
        except Exception as exc:
            raise StageError("orient", exc)
        timings["orient"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        try:
            passed, reason = self.gate.accept(normalized)
        except Exception as exc:
            raise StageError("gate", exc)
        timings["gate"] = time.perf_counter() - t0

        scores = None
        t0 = time.perf_counter()
        if passed:
            try:
                vec = self.ensemble.predict(normalized)
            except Exception as exc:
                raise StageError("predict", exc)
            scores = {
                fid: float(s) for fid, s in zip(self.ensemble.finding_ids, vec)
            }
        timings["predict"] = time.perf_counter() - t0

        return ImageResult(
            request_id=request_id,
            image_id=image_id,
            model_version=self.ensemble.version,
            orientation_applied=orientation,
            gate_passed=passed,
            scores=scores,
            completed_at=time.time(),
            gate_reason=reason,
            stage_timings=timings,
        )
