import io
import threading
import time

import numpy as np
import pytest
from PIL import Image

from vetrad.calib import CalibrationParams
from vetrad.ensemble import Ensemble
from vetrad.models import MlpBackend
from vetrad.pipeline.config import ConfigError, PipelineConfig, load_config
from vetrad.pipeline.gate import HeuristicGate
from vetrad.pipeline.orchestrator import Orchestrator, StageError
from vetrad.pipeline.orient import TRANSFORMS, normalize_orientation
from vetrad.pipeline.queue import DurableQueue, QueueError
from vetrad.pipeline.service import (
    ConflictError,
    DriftMonitor,
    NotFoundError,
    PayloadError,
    PipelineService,
    RequestStatus,
    decode_payload,
)
from vetrad.pipeline.stores import LongTermStore, TtlStore
from vetrad.synth import SyntheticSpec, generate

SIZE = 32


def png_bytes(pixels):
    img = Image.fromarray((np.clip(pixels, 0, 1) * 255).astype(np.uint8))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def make_ensemble(taxonomy, size=SIZE, n_members=1):
    members = []
    for m in range(n_members):
        backend = MlpBackend(input_shape=(size, size), n_outputs=41, seed=m)
        params = CalibrationParams(opt={f: 0.5 for f in taxonomy.ids})
        members.append((backend, params))
    return Ensemble(members=members, finding_ids=taxonomy.ids)


@pytest.fixture
def service(taxonomy, tmp_path):
    cfg = PipelineConfig(
        worker_count=4,
        data_dir=str(tmp_path / "data"),
        aggregation_timeout_s=0.4,
        aggregation_tick_s=0.05,
        queue_poll_s=0.02,
    )
    svc = PipelineService(cfg, Orchestrator(make_ensemble(taxonomy)))
    yield svc
    svc.close()


def submit(svc, request_id, pixels=None, study_id=None, expected=1, **meta):
    if pixels is None:
        pixels = np.random.default_rng(hash(request_id) % 2**32).uniform(0, 1, (SIZE, SIZE))
    metadata = {
        "study_id": study_id or request_id,
        "expected_images": expected,
        "image_id": request_id,
        **meta,
    }
    return svc.enqueue(request_id, png_bytes(pixels), metadata)


def wait_until(predicate, timeout=10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(0.02)
    return False


def request_settled(svc, request_id):
    status = svc.get_request(request_id)["status"]
    return status in (RequestStatus.DONE, RequestStatus.FAILED)


class TestConfig:
    def test_defaults_and_file(self, tmp_path):
        path = tmp_path / "pipeline.conf"
        path.write_text("WORKER_COUNT=8\n# comment\nDRIFT_ALPHA=0.05\n")
        cfg = load_config(str(path), environ={})
        assert cfg.worker_count == 8
        assert cfg.drift_alpha == 0.05
        assert cfg.max_attempts == 3

    def test_env_override_wins(self, tmp_path):
        path = tmp_path / "pipeline.conf"
        path.write_text("WORKER_COUNT=8\n")
        cfg = load_config(str(path), environ={"VETRAD_WORKER_COUNT": "2"})
        assert cfg.worker_count == 2

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("NOT_A_KEY=1\n")
        with pytest.raises(ConfigError, match="NOT_A_KEY"):
            load_config(str(path), environ={})

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("WORKER_COUNT=many\n")
        with pytest.raises(ConfigError, match="worker_count"):
            load_config(str(path), environ={})

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("/nonexistent/pipeline.conf", environ={})

    def test_invalid_combination(self):
        with pytest.raises(ConfigError):
            PipelineConfig(worker_count=0).validate()


class TestDurableQueue:
    def test_fifo_and_ack(self, tmp_path):
        q = DurableQueue(str(tmp_path / "q.wal"))
        q.put("a")
        q.put("b")
        assert q.get(0.1) == "a"
        q.ack("a")
        assert q.get(0.1) == "b"

    def test_duplicate_put_ignored(self, tmp_path):
        q = DurableQueue(str(tmp_path / "q.wal"))
        q.put("a")
        q.put("a")
        assert q.depth() == 1

    def test_nack_redelivers(self, tmp_path):
        q = DurableQueue(str(tmp_path / "q.wal"))
        q.put("a")
        assert q.get(0.1) == "a"
        q.nack("a")
        assert q.get(0.1) == "a"

    def test_ack_requires_in_flight(self, tmp_path):
        q = DurableQueue(str(tmp_path / "q.wal"))
        with pytest.raises(QueueError):
            q.ack("ghost")

    def test_wal_recovery_redelivers_unacked(self, tmp_path):
        wal = str(tmp_path / "q.wal")
        q = DurableQueue(wal)
        q.put("done-item")
        q.put("lost-item")
        assert q.get(0.1) == "done-item"
        q.ack("done-item")
        assert q.get(0.1) == "lost-item"  # taken but never acked: worker died
        q.close()
        recovered = DurableQueue(wal)
        assert recovered.get(0.1) == "lost-item"
        assert recovered.get(0.05) is None

    def test_exclusive_delivery_under_concurrency(self, tmp_path):
        q = DurableQueue(str(tmp_path / "q.wal"))
        for i in range(200):
            q.put(f"m{i}")
        seen = []
        lock = threading.Lock()

        def consume():
            while True:
                item = q.get(0.05)
                if item is None:
                    return
                with lock:
                    seen.append(item)
                q.ack(item)

        threads = [threading.Thread(target=consume) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(seen) == sorted(f"m{i}" for i in range(200))
        assert len(set(seen)) == 200


class TestStores:
    def test_ttl_expiry(self):
        now = [0.0]
        store = TtlStore(10.0, clock=lambda: now[0])
        store.put("k", "v")
        assert store.get("k") == "v"
        now[0] = 10.1
        assert store.get("k") is None

    def test_ttl_sweep(self):
        now = [0.0]
        store = TtlStore(5.0, clock=lambda: now[0])
        store.put("a", 1)
        store.put("b", 2)
        now[0] = 6.0
        assert store.sweep() == 2
        assert len(store) == 0

    def test_long_term_idempotent_put(self, tmp_path):
        store = LongTermStore(str(tmp_path / "lt.jsonl"))
        assert store.put("k", {"v": 1}) is True
        assert store.put("k", {"v": 2}) is False
        assert store.get("k") == {"v": 1}

    def test_long_term_replace_and_reload(self, tmp_path):
        path = str(tmp_path / "lt.jsonl")
        store = LongTermStore(path)
        store.put("k", {"v": 1})
        store.replace("k", {"v": 2})
        store.close()
        reloaded = LongTermStore(path)
        assert reloaded.get("k") == {"v": 2}
        assert len(reloaded) == 1


class TestOrientation:
    def canonical(self):
        rng = np.random.default_rng(0)
        from vetrad.synth import render_image

        return render_image(rng, SIZE, set())

    def test_already_normalized_is_none(self):
        px = self.canonical()
        normalized, applied = normalize_orientation(px)
        assert applied == "none"
        assert np.array_equal(normalized, px)

    def test_round_trip_all_poses(self):
        px = self.canonical()
        # disturb each pose with the inverse of every correction
        inverses = {
            "none": lambda p: p,
            "rot90": lambda p: np.rot90(p, 1),
            "rot180": lambda p: np.rot90(p, 2),
            "rot270": lambda p: np.rot90(p, -1),
            "hflip": lambda p: p[:, ::-1],
            "vflip": lambda p: p[::-1, :],
        }
        for name, disturb in inverses.items():
            normalized, applied = normalize_orientation(disturb(px))
            assert applied == name, name
            assert np.allclose(normalized, px), name

    def test_involution_closure(self):
        px = self.canonical()
        once, _ = normalize_orientation(np.rot90(px, 2))
        twice, applied = normalize_orientation(once)
        assert applied == "none"
        assert np.array_equal(once, twice)


class TestGate:
    def test_blank_image_rejected(self):
        ok, reason = HeuristicGate().accept(np.full((SIZE, SIZE), 0.5))
        assert not ok
        assert "entropy" in reason

    def test_noisy_image_accepted(self):
        px = np.random.default_rng(0).uniform(0, 1, (SIZE, SIZE))
        ok, _ = HeuristicGate().accept(px)
        assert ok

    def test_extreme_aspect_rejected(self):
        px = np.random.default_rng(0).uniform(0, 1, (10, 100))
        ok, reason = HeuristicGate().accept(px)
        assert not ok
        assert "aspect" in reason


class TestOrchestrator:
    def test_valid_image_gets_41_scores(self, taxonomy):
        orch = Orchestrator(make_ensemble(taxonomy))
        px = np.random.default_rng(0).uniform(0, 1, (SIZE, SIZE))
        result = orch.orchestrate("r1", "i1", px)
        assert result.gate_passed
        assert len(result.scores) == 41
        assert all(0.0 <= s <= 1.0 for s in result.scores.values())

    def test_blank_image_gated_no_scores(self, taxonomy):
        orch = Orchestrator(make_ensemble(taxonomy))
        result = orch.orchestrate("r1", "i1", np.full((SIZE, SIZE), 0.3))
        assert not result.gate_passed
        assert result.scores is None

    def test_rotated_image_scores_match_unrotated(self, taxonomy):
        from vetrad.synth import render_image

        orch = Orchestrator(make_ensemble(taxonomy))
        px = render_image(np.random.default_rng(1), SIZE, {"cardiomegaly"})
        straight = orch.orchestrate("r1", "i1", px)
        rotated = orch.orchestrate("r2", "i2", np.rot90(px, 1))
        assert rotated.orientation_applied == "rot90"
        for fid, s in straight.scores.items():
            assert rotated.scores[fid] == pytest.approx(s, abs=1e-6)

    def test_stage_error_names_stage(self, taxonomy):
        class BrokenGate:
            def accept(self, pixels):
                raise RuntimeError("boom")

        orch = Orchestrator(make_ensemble(taxonomy), gate=BrokenGate())
        with pytest.raises(StageError) as err:
            orch.orchestrate("r1", "i1", np.zeros((SIZE, SIZE)))
        assert err.value.stage == "gate"


class TestDecodePayload:
    def test_png_round_trip(self):
        px = np.random.default_rng(0).uniform(0, 1, (SIZE, SIZE))
        decoded = decode_payload(png_bytes(px))
        assert decoded.shape == (SIZE, SIZE)
        assert np.abs(decoded - px).max() < 1 / 255 + 1e-9

    def test_truncated_bytes_rejected(self):
        with pytest.raises(PayloadError, match="decode"):
            decode_payload(png_bytes(np.zeros((SIZE, SIZE)))[:40])

    def test_garbage_rejected(self):
        with pytest.raises(PayloadError, match="decode"):
            decode_payload(b"not an image at all")


class TestServiceIngest:
    def test_fresh_request_queued(self, service):
        ack = submit(service, "r1")
        assert ack["status"] == RequestStatus.QUEUED
        assert not ack["duplicate"]

    def test_duplicate_flagged_once_enqueued(self, service):
        submit(service, "r1")
        ack = submit(service, "r1")
        assert ack["duplicate"]
        assert service.queue.depth() == 1

    def test_bad_payload_rejected_synchronously(self, service):
        with pytest.raises(PayloadError):
            service.enqueue("bad", b"junk", {})
        with pytest.raises(NotFoundError):
            service.get_request("bad")


class TestServiceProcessing:
    def test_requests_end_done_with_results(self, service):
        for i in range(8):
            submit(service, f"r{i}")
        service.start()
        assert wait_until(
            lambda: all(request_settled(service, f"r{i}") for i in range(8))
        )
        for i in range(8):
            row = service.get_request(f"r{i}")
            assert row["status"] == RequestStatus.DONE
            assert row["result"]["request_id"] == f"r{i}"
        assert len(service.results) == 8

    def test_transient_fault_succeeds_with_attempt_count_2(self, service):
        failures = {"r0": 1}

        def inject(request):
            if failures.get(request.request_id, 0) > 0:
                failures[request.request_id] -= 1
                raise RuntimeError("transient")

        service.fault_injector = inject
        submit(service, "r0")
        service.start()
        assert wait_until(lambda: request_settled(service, "r0"))
        row = service.get_request("r0")
        assert row["status"] == RequestStatus.DONE
        assert row["attempt_count"] == 2

    def test_poison_request_fails_after_max_attempts(self, service):
        def inject(request):
            raise RuntimeError("always broken")

        service.fault_injector = inject
        submit(service, "r0")
        service.start()
        assert wait_until(lambda: request_settled(service, "r0"))
        row = service.get_request("r0")
        assert row["status"] == RequestStatus.FAILED
        assert row["attempt_count"] == 3
        assert "always broken" in row["error"]
        assert row["result"] is None

    def test_exactly_one_store_record_despite_retries(self, service):
        flaky = {f"r{i}": 1 for i in range(0, 10, 2)}

        def inject(request):
            if flaky.get(request.request_id, 0) > 0:
                flaky[request.request_id] -= 1
                raise RuntimeError("flaky")

        service.fault_injector = inject
        for i in range(10):
            submit(service, f"r{i}")
        service.start()
        assert wait_until(
            lambda: all(request_settled(service, f"r{i}") for i in range(10))
        )
        assert sorted(service.results.keys()) == sorted(f"r{i}" for i in range(10))


class TestAggregation:
    def test_complete_study_fuses_max(self, service, taxonomy):
        rng = np.random.default_rng(0)
        for k in range(3):
            submit(
                service, f"s1-img{k}",
                pixels=rng.uniform(0, 1, (SIZE, SIZE)),
                study_id="study-1", expected=3,
            )
        service.start()
        assert wait_until(lambda: service.study_store.get("study-1") is not None)
        study = service.get_study("study-1")
        assert study["trigger"] == "complete"
        assert len(study["member_image_ids"]) == 3
        members = [service.get_request(f"s1-img{k}")["result"] for k in range(3)]
        for fid in taxonomy.ids:
            expected = max(m["scores"][fid] for m in members)
            assert study["scores"][fid] == pytest.approx(expected)
            assert study["flags"][fid] == (study["scores"][fid] >= 0.5)

    def test_incomplete_study_times_out(self, service):
        for k in range(2):
            submit(service, f"s2-img{k}", study_id="study-2", expected=3)
        service.start()
        assert wait_until(lambda: service.study_store.get("study-2") is not None, timeout=5)
        study = service.get_study("study-2")
        assert study["trigger"] == "timeout"
        assert len(study["member_image_ids"]) == 2

    def test_all_gated_study_gets_diagnostic_note(self, service):
        submit(service, "blank-1", pixels=np.full((SIZE, SIZE), 0.4),
               study_id="study-3", expected=1)
        service.start()
        assert wait_until(lambda: service.study_store.get("study-3") is not None)
        study = service.get_study("study-3")
        assert study["scores"] == {}
        assert any("gate" in n for n in study["notes"])

    def test_feline_cardiomegaly_note_applied(self, taxonomy, tmp_path):
        cfg = PipelineConfig(
            worker_count=2, data_dir=str(tmp_path / "d"),
            aggregation_timeout_s=0.4, aggregation_tick_s=0.05, queue_poll_s=0.02,
        )

        class HighCardio(Orchestrator):
            def orchestrate(self, request_id, image_id, pixels):
                result = super().orchestrate(request_id, image_id, pixels)
                result.scores["cardiomegaly"] = 0.8
                return result

        svc = PipelineService(cfg, HighCardio(make_ensemble(taxonomy)))
        try:
            submit(svc, "f1", study_id="study-f", expected=1, species="feline")
            svc.start()
            assert wait_until(lambda: svc.study_store.get("study-f") is not None)
            study = svc.get_study("study-f")
            assert "feline-cardiomegaly-note" in study["rule_trace"]
            assert any("echocardiography" in n for n in study["notes"])
        finally:
            svc.close()

    def test_study_aggregated_exactly_once(self, service):
        submit(service, "s4-img0", study_id="study-4", expected=1)
        service.start()
        assert wait_until(lambda: service.study_store.get("study-4") is not None)
        first = service.get_study("study-4")
        time.sleep(0.6)  # past the timeout window: no re-aggregation
        assert service.get_study("study-4")["completed_at"] == first["completed_at"]


class TestRequeue:
    def test_unknown_id_not_found(self, service):
        with pytest.raises(NotFoundError):
            service.requeue("ghost")

    def test_queued_request_conflicts(self, service):
        submit(service, "r1")  # no workers running, stays queued
        with pytest.raises(ConflictError):
            service.requeue("r1")

    def test_failed_request_requeues_to_done(self, service):
        calls = {"n": 0}

        def inject(request):
            if calls["n"] < 3:
                calls["n"] += 1
                raise RuntimeError("broken config")

        service.fault_injector = inject
        submit(service, "r1")
        service.start()
        assert wait_until(
            lambda: service.get_request("r1")["status"] == RequestStatus.FAILED
        )
        service.requeue("r1")  # the "config" is fixed now: injector exhausted
        assert wait_until(
            lambda: service.get_request("r1")["status"] == RequestStatus.DONE
        )
        assert len(service.results) == 1

    def test_requeue_writes_audit_entry(self, service):
        submit(service, "r1")
        service.start()
        assert wait_until(lambda: request_settled(service, "r1"))
        service.requeue("r1")
        with open(service._audit_path) as fh:
            lines = fh.read().strip().splitlines()
        assert any("r1" in line and "requeue" in line for line in lines)

    def test_requeue_reopens_study_epoch(self, service):
        submit(service, "r1", study_id="study-r", expected=1)
        service.start()
        assert wait_until(lambda: service.study_store.get("study-r") is not None)
        first = service.get_study("study-r")["completed_at"]
        service.requeue("r1")
        assert wait_until(
            lambda: service.study_store.get("study-r")["completed_at"] != first
        )


class TestStats:
    def test_idle_counts_zero(self, service):
        stats = service.stats()
        assert stats["accepted_total"] == 0
        assert all(v == 0 for v in stats["by_status"].values())
        assert stats["queue_depth"] == 0

    def test_counts_sum_to_accepted(self, service):
        for i in range(6):
            submit(service, f"r{i}")
        service.start()
        assert wait_until(
            lambda: all(request_settled(service, f"r{i}") for i in range(6))
        )
        stats = service.stats()
        assert sum(stats["by_status"].values()) == stats["accepted_total"] == 6
        assert stats["by_status"][RequestStatus.DONE] == 6
        assert stats["stage_latency"]["predict"]["p50_ms"] is not None
        assert stats["workers_alive"] == 4


class TestHttpApi:
    @pytest.fixture
    def client(self, service):
        from fastapi.testclient import TestClient
        from vetrad.pipeline.api import create_app

        service.start()
        with TestClient(create_app(service)) as client:
            yield client

    def post_image(self, client, request_id, study_id="s1", expected=1):
        px = np.random.default_rng(abs(hash(request_id)) % 2**32).uniform(0, 1, (SIZE, SIZE))
        import json as _json

        return client.post(
            "/v1/images",
            files={"payload": ("img.png", png_bytes(px), "image/png")},
            data={
                "request_id": request_id,
                "metadata": _json.dumps(
                    {"study_id": study_id, "expected_images": expected, "image_id": request_id}
                ),
            },
        )

    def test_submit_and_fetch(self, client):
        resp = self.post_image(client, "r1")
        assert resp.status_code == 200
        assert resp.json()["status"] == RequestStatus.QUEUED
        assert wait_until(
            lambda: client.get("/v1/requests/r1").json()["status"] == RequestStatus.DONE
        )
        row = client.get("/v1/requests/r1").json()
        assert len(row["result"]["scores"]) == 41

    def test_bad_payload_400(self, client):
        resp = client.post(
            "/v1/images",
            files={"payload": ("x.png", b"garbage", "image/png")},
            data={"request_id": "bad", "metadata": "{}"},
        )
        assert resp.status_code == 400

    def test_unknown_request_404(self, client):
        assert client.get("/v1/requests/ghost").status_code == 404
        assert client.get("/v1/studies/ghost").status_code == 404
        assert client.post("/v1/requests/ghost/requeue").status_code == 404

    def test_study_endpoint(self, client):
        self.post_image(client, "r1", study_id="study-x")
        assert wait_until(
            lambda: client.get("/v1/studies/study-x").status_code == 200
        )
        study = client.get("/v1/studies/study-x").json()
        assert study["trigger"] == "complete"

    def test_requeue_round_trip(self, client):
        self.post_image(client, "r1")
        assert wait_until(
            lambda: client.get("/v1/requests/r1").json()["status"] == RequestStatus.DONE
        )
        assert client.post("/v1/requests/r1/requeue").status_code == 200
        assert wait_until(
            lambda: client.get("/v1/requests/r1").json()["status"] == RequestStatus.DONE
        )

    def test_stats_and_rules_endpoints(self, client):
        stats = client.get("/v1/queue/stats").json()
        assert "by_status" in stats
        rules = client.get("/v1/rules").json()
        assert rules["version"] == "1"
        assert rules["count"] >= 3

    def test_request_list_endpoint(self, client):
        self.post_image(client, "r1")
        assert wait_until(
            lambda: client.get("/v1/requests/r1").json()["status"] == RequestStatus.DONE
        )
        rows = client.get("/v1/requests").json()
        assert any(r["request_id"] == "r1" for r in rows)
        done = client.get("/v1/requests", params={"status": "done"}).json()
        assert all(r["status"] == "done" for r in done)

    def test_drift_endpoints_empty_without_monitor(self, client):
        assert client.get("/v1/drift/weekly").json() == []
        assert client.get("/v1/drift/verdicts").json() == []
