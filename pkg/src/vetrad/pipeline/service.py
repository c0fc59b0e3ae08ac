"""The pipeline service: request registry, worker pool, study aggregation.

Delivery contract: at-least-once consumption from the durable queue combined
with idempotent keyed writes to the long-term store, so every request_id has
at most one observable result record no matter how many delivery attempts
happened. Study aggregation is serialized per study_id and fires once per
completion epoch; an explicit requeue opens a new epoch.
"""

from __future__ import annotations

import io
import json
import math
import os
import threading
import time
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..drift import (
    Autoencoder,
    ReconstructionRecord,
    reconstruction_error,
    weekly_quantiles,
    weekly_verdicts,
)
from ..ensemble import fuse_study
from ..rules import FactBase, load_rules, run_rules
from .config import PipelineConfig
from .orchestrator import ImageResult, Orchestrator, STAGES
from .queue import DurableQueue
from .stores import LongTermStore, TtlStore


class RequestStatus:
    QUEUED = "queued"
    PROCESSING = "processing"
    DONE = "done"
    FAILED = "failed"
    REQUEUED = "requeued"


class NotFoundError(KeyError):
    pass


class ConflictError(RuntimeError):
    pass


class PayloadError(ValueError):
    pass


@dataclass
class InferenceRequest:
    request_id: str
    image_id: str
    study_id: str
    organization_id: str
    species: str
    body_part: str
    submitted_at: float
    expected_images: int | None = None
    status: str = RequestStatus.QUEUED
    attempt_count: int = 0
    error: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class StudyResult:
    study_id: str
    scores: dict[str, float]
    flags: dict[str, bool]
    notes: list[str]
    suppressed: list[str]
    member_image_ids: list[str]
    trigger: str  # "complete" or "timeout"
    completed_at: float
    rule_trace: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        for fid, score in self.scores.items():
            if self.flags.get(fid) != (score >= 0.5):
                raise ValueError(f"flag for {fid} inconsistent with score {score}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class DriftMonitor:
    """Optional online drift tracking: every scored image contributes a
    reconstruction-error record compared against the training-time baseline."""

    autoencoder: Autoencoder
    baseline_errors: np.ndarray
    alpha: float = 0.01
    records: list[ReconstructionRecord] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def observe(self, image_id: str, organization_id: str, timestamp: float, pixels: np.ndarray) -> None:
        err = reconstruction_error(self.autoencoder, pixels)
        with self._lock:
            self.records.append(
                ReconstructionRecord(image_id, organization_id, timestamp, err)
            )

    def weekly(self) -> list[dict]:
        with self._lock:
            return weekly_quantiles(list(self.records))

    def verdicts(self) -> list[dict]:
        with self._lock:
            records = list(self.records)
        out = []
        for v in weekly_verdicts(list(self.baseline_errors), records, self.alpha):
            row = v.to_dict()
            # inconclusive windows carry NaN statistics, which JSON cannot
            for key in ("statistic", "p_value"):
                if not math.isfinite(row[key]):
                    row[key] = None
            out.append(row)
        return out


class _StudyState:
    __slots__ = ("expected", "results", "metadata", "first_arrival", "aggregated", "lock")

    def __init__(self, expected: int | None, metadata: dict):
        self.expected = expected
        self.results: dict[str, ImageResult] = {}
        self.metadata = metadata
        self.first_arrival: float | None = None
        self.aggregated = False
        self.lock = threading.Lock()


def decode_payload(payload: bytes) -> np.ndarray:
    """PNG or JPEG bytes to grayscale pixels in [0, 1]."""
    try:
        img = Image.open(io.BytesIO(payload))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise PayloadError(f"could not decode image payload: {exc}") from exc
    return np.asarray(img.convert("L"), dtype=float) / 255.0


class PipelineService:
    def __init__(
        self,
        config: PipelineConfig,
        orchestrator: Orchestrator,
        rules_path: str | None = None,
        drift_monitor: DriftMonitor | None = None,
        clock=time.monotonic,
    ):
        config.validate()
        self.config = config
        self.orchestrator = orchestrator
        self.rules_path = rules_path or (config.context_rules_path or None)
        self.drift_monitor = drift_monitor
        self._clock = clock

        os.makedirs(config.data_dir, exist_ok=True)
        self.queue = DurableQueue(os.path.join(config.data_dir, "queue.wal"))
        self.results = LongTermStore(os.path.join(config.data_dir, "results.jsonl"))
        self.study_store = LongTermStore(os.path.join(config.data_dir, "studies.jsonl"))
        self.short_term = TtlStore(config.short_term_ttl_s)
        self._audit_path = os.path.join(config.data_dir, "audit.jsonl")
        self._payload_dir = os.path.join(config.data_dir, "payloads")
        os.makedirs(self._payload_dir, exist_ok=True)

        self._lock = threading.Lock()
        self._requests: dict[str, InferenceRequest] = {}
        self._pixels: dict[str, np.ndarray] = {}
        self._overwrite: set[str] = set()  # request_ids requeued explicitly
        self._studies: dict[str, _StudyState] = {}
        self._stage_timings: dict[str, list[float]] = {s: [] for s in STAGES}
        self._accepted_total = 0

        self._workers: list[threading.Thread] = []
        self._aggregation_thread: threading.Thread | None = None
        self._stop = threading.Event()

        # test seam: callable(request) invoked before orchestration, may raise
        self.fault_injector = None

    # -- ingest --------------------------------------------------------------
    def enqueue(self, request_id: str, payload: bytes, metadata: dict) -> dict:
        """Accept one image request; idempotent on request_id."""
        if not request_id or not isinstance(request_id, str):
            raise PayloadError("request_id must be a non-empty string")
        with self._lock:
            if request_id in self._requests:
                return {
                    "request_id": request_id,
                    "status": self._requests[request_id].status,
                    "duplicate": True,
                    "queue_position": self.queue.depth(),
                }
        pixels = decode_payload(payload)
        expected = metadata.get("expected_images")
        request = InferenceRequest(
            request_id=request_id,
            image_id=metadata.get("image_id", request_id),
            study_id=metadata.get("study_id", request_id),
            organization_id=metadata.get("organization_id", "unknown"),
            species=metadata.get("species", "unknown"),
            body_part=metadata.get("body_part", "unknown"),
            submitted_at=metadata.get("submitted_at", time.time()),
            expected_images=int(expected) if expected is not None else None,
        )
        np.save(os.path.join(self._payload_dir, f"{request_id}.npy"), pixels)
        with self._lock:
            if request_id in self._requests:  # raced with another ingest
                return {
                    "request_id": request_id,
                    "status": self._requests[request_id].status,
                    "duplicate": True,
                    "queue_position": self.queue.depth(),
                }
            self._requests[request_id] = request
            self._pixels[request_id] = pixels
            self._accepted_total += 1
            state = self._studies.get(request.study_id)
            if state is None:
                self._studies[request.study_id] = _StudyState(
                    request.expected_images,
                    {
                        "species": request.species,
                        "organization_id": request.organization_id,
                    },
                )
            elif request.expected_images is not None:
                self._studies[request.study_id].expected = request.expected_images
        position = self.queue.put(request_id)
        return {
            "request_id": request_id,
            "status": RequestStatus.QUEUED,
            "duplicate": False,
            "queue_position": position,
        }

    # -- worker pool ---------------------------------------------------------
    def start(self) -> None:
        self._stop.clear()
        for i in range(self.config.worker_count):
            t = threading.Thread(target=self._worker_loop, name=f"worker-{i}", daemon=True)
            t.start()
            self._workers.append(t)
        self._aggregation_thread = threading.Thread(
            target=self._aggregation_loop, name="aggregator", daemon=True
        )
        self._aggregation_thread.start()

    def stop(self, timeout: float = 5.0) -> None:
        self._stop.set()
        for t in self._workers:
            t.join(timeout)
        if self._aggregation_thread is not None:
            self._aggregation_thread.join(timeout)
        self._workers = []
        self._aggregation_thread = None

    def _worker_loop(self) -> None:
        while not self._stop.is_set():
            request_id = self.queue.get(timeout=self.config.queue_poll_s)
            if request_id is None:
                continue
            self._process_one(request_id)

    def _process_one(self, request_id: str) -> None:
        with self._lock:
            request = self._requests.get(request_id)
        if request is None:  # WAL replayed an id we no longer know
            self.queue.ack(request_id)
            return
        request.status = RequestStatus.PROCESSING
        try:
            pixels = self._load_pixels(request_id)
            if self.fault_injector is not None:
                self.fault_injector(request)
            result = self.orchestrator.orchestrate(request_id, request.image_id, pixels)
        except Exception as exc:
            request.attempt_count += 1
            if request.attempt_count >= self.config.max_attempts:
                request.status = RequestStatus.FAILED
                request.error = str(exc)
                self.queue.ack(request_id)
            else:
                request.status = RequestStatus.QUEUED
                self.queue.nack(request_id)
            return
        request.attempt_count += 1
        self._record_result(request, result)
        request.status = RequestStatus.DONE
        request.error = None
        self.queue.ack(request_id)

    def _load_pixels(self, request_id: str) -> np.ndarray:
        with self._lock:
            pixels = self._pixels.get(request_id)
        if pixels is None:  # fall back to the durable payload cache
            pixels = np.load(os.path.join(self._payload_dir, f"{request_id}.npy"))
            with self._lock:
                self._pixels[request_id] = pixels
        return pixels

    def _record_result(self, request: InferenceRequest, result: ImageResult) -> None:
        record = result.to_dict()
        if request.request_id in self._overwrite:
            self.results.replace(request.request_id, record)
            with self._lock:
                self._overwrite.discard(request.request_id)
        else:
            self.results.put(request.request_id, record)
        self.short_term.put(f"img:{request.request_id}", result)
        with self._lock:
            for stage, dt in result.stage_timings.items():
                self._stage_timings[stage].append(dt)
        if self.drift_monitor is not None and result.gate_passed:
            self.drift_monitor.observe(
                request.image_id,
                request.organization_id,
                request.submitted_at,
                self._load_pixels(request.request_id),
            )
        state = self._studies.get(request.study_id)
        if state is not None:
            with state.lock:
                state.results[request.image_id] = result
                if state.first_arrival is None:
                    state.first_arrival = self._clock()
            self._maybe_aggregate(request.study_id, state)

    # -- study aggregation ---------------------------------------------------
    def _aggregation_loop(self) -> None:
        while not self._stop.is_set():
            self.short_term.sweep()
            now = self._clock()
            for study_id, state in list(self._studies.items()):
                with state.lock:
                    due = (
                        not state.aggregated
                        and state.first_arrival is not None
                        and now - state.first_arrival >= self.config.aggregation_timeout_s
                    )
                if due:
                    self._aggregate(study_id, state, trigger="timeout")
            self._stop.wait(self.config.aggregation_tick_s)

    def _maybe_aggregate(self, study_id: str, state: _StudyState) -> None:
        with state.lock:
            complete = (
                not state.aggregated
                and state.expected is not None
                and len(state.results) >= state.expected
            )
        if complete:
            self._aggregate(study_id, state, trigger="complete")

    def _aggregate(self, study_id: str, state: _StudyState, trigger: str) -> None:
        with state.lock:
            if state.aggregated:
                return
            state.aggregated = True
            results = dict(state.results)
            metadata = dict(state.metadata)
        passed = {iid: r for iid, r in results.items() if r.gate_passed}
        finding_ids = self.orchestrator.ensemble.finding_ids
        notes: list[str] = []
        suppressed: list[str] = []
        trace: list[str] = []
        if passed:
            vectors = [
                np.array([r.scores[f] for f in finding_ids])
                for r in passed.values()
            ]
            fused = fuse_study(vectors)
            scores = {f: float(s) for f, s in zip(finding_ids, fused)}
            rules, _version = load_rules(self.rules_path)
            facts = FactBase(metadata=metadata, scores=dict(scores))
            out, trace, notes = run_rules(facts, rules)
            suppressed = sorted(out.suppressed)
        else:
            scores = {}
            notes = ["no image passed the validity gate; study not scored"]
        study = StudyResult(
            study_id=study_id,
            scores=scores,
            flags={f: s >= 0.5 for f, s in scores.items()},
            notes=notes,
            suppressed=suppressed,
            member_image_ids=sorted(passed),
            trigger=trigger,
            completed_at=time.time(),
            rule_trace=trace,
        )
        self.study_store.replace(study_id, study.to_dict())
        for r in results.values():
            self.short_term.expire(f"img:{r.request_id}")

    # -- tracking and re-processing ------------------------------------------
    def get_request(self, request_id: str) -> dict:
        with self._lock:
            request = self._requests.get(request_id)
        if request is None:
            raise NotFoundError(request_id)
        out = request.to_dict()
        out["result"] = self.results.get(request_id)
        return out

    def list_requests(self, status: str | None = None, limit: int = 200) -> list[dict]:
        with self._lock:
            requests = list(self._requests.values())
        requests.sort(key=lambda r: r.submitted_at, reverse=True)
        rows = [r.to_dict() for r in requests if status is None or r.status == status]
        return rows[:limit]

    def get_study(self, study_id: str) -> dict:
        record = self.study_store.get(study_id)
        if record is None:
            raise NotFoundError(study_id)
        return record

    def requeue(self, request_id: str) -> dict:
        with self._lock:
            request = self._requests.get(request_id)
        if request is None:
            raise NotFoundError(request_id)
        if request.status not in (RequestStatus.DONE, RequestStatus.FAILED):
            raise ConflictError(
                f"request {request_id} is {request.status}; only done or "
                "failed requests can be requeued"
            )
        request.status = RequestStatus.REQUEUED
        request.attempt_count = 0
        request.error = None
        with self._lock:
            self._overwrite.add(request_id)
        state = self._studies.get(request.study_id)
        if state is not None:
            with state.lock:  # open a new completion epoch for the study
                state.results.pop(request.image_id, None)
                state.aggregated = False
        self._audit("requeue", request_id)
        self.queue.put(request_id)
        return {"request_id": request_id, "status": RequestStatus.REQUEUED}

    def _audit(self, action: str, request_id: str) -> None:
        entry = {"at": time.time(), "action": action, "request_id": request_id}
        with self._lock:
            with open(self._audit_path, "a") as fh:
                fh.write(json.dumps(entry) + "\n")

    # -- monitoring ----------------------------------------------------------
    def stats(self) -> dict:
        with self._lock:
            by_status: dict[str, int] = {
                s: 0
                for s in (
                    RequestStatus.QUEUED,
                    RequestStatus.PROCESSING,
                    RequestStatus.DONE,
                    RequestStatus.FAILED,
                    RequestStatus.REQUEUED,
                )
            }
            for request in self._requests.values():
                by_status[request.status] += 1
            timings = {k: list(v) for k, v in self._stage_timings.items()}
            accepted = self._accepted_total
        latency = {}
        for stage, values in timings.items():
            if values:
                arr = np.asarray(values)
                latency[stage] = {
                    "p50_ms": float(np.percentile(arr, 50) * 1000),
                    "p95_ms": float(np.percentile(arr, 95) * 1000),
                }
            else:
                latency[stage] = {"p50_ms": None, "p95_ms": None}
        return {
            "accepted_total": accepted,
            "by_status": by_status,
            "queue_depth": self.queue.depth(),
            "in_flight": self.queue.in_flight_count(),
            "stage_latency": latency,
            "workers_alive": sum(t.is_alive() for t in self._workers),
        }

    def active_rules(self) -> dict:
        rules, version = load_rules(self.rules_path)
        return {
            "version": version,
            "count": len(rules),
            "rules": [
                {"id": r.id, "salience": r.salience, "conditions": len(r.conditions), "actions": len(r.actions)}
                for r in rules
            ],
        }

    def drift_weekly(self) -> list[dict]:
        if self.drift_monitor is None:
            return []
        return self.drift_monitor.weekly()

    def drift_verdicts(self) -> list[dict]:
        if self.drift_monitor is None:
            return []
        return self.drift_monitor.verdicts()

    def close(self) -> None:
        self.stop()
        self.queue.close()
        self.results.close()
        self.study_store.close()
