import json
import os

import numpy as np
import pytest

from vetrad.cli import cli, main

SUBCOMMANDS = [
    "generate", "filter", "label-reports", "train", "distill", "calibrate",
    "evaluate", "ensemble", "drift", "serve", "demo",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One generated dataset plus a trained model shared by the read-only tests."""
    base = tmp_path_factory.mktemp("cli")
    ds = str(base / "ds")
    model = str(base / "model.npz")
    calib = str(base / "calib.json")
    assert main([
        "generate", "--seed", "3", "--n-studies", "40", "--image-size", "32", "--out", ds
    ]) == 0
    assert main([
        "train", "--data", ds, "--out", model, "--labels", "truth", "--max-epochs", "8"
    ]) == 0
    assert main(["calibrate", "--model", model, "--data", ds, "--out", calib]) == 0
    return {"base": base, "ds": ds, "model": model, "calib": calib}


class TestHelp:
    @pytest.mark.parametrize("sub", SUBCOMMANDS)
    def test_subcommand_help_exits_zero(self, sub, capsys):
        assert main([sub, "--help"]) == 0
        assert "Usage" in capsys.readouterr().out

    def test_top_level_help(self, capsys):
        assert main(["--help"]) == 0
        out = capsys.readouterr().out
        for sub in SUBCOMMANDS:
            assert sub in out


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["--definitely-not-a-flag"]) == 1

    def test_unknown_subcommand_is_usage_error(self):
        assert main(["frobnicate"]) == 1

    def test_missing_file_is_validation_error(self, workspace, capsys):
        code = main(["evaluate", "--model", "/no/model.npz", "--data", workspace["ds"]])
        assert code == 2
        assert "/no/model.npz" in capsys.readouterr().err

    def test_missing_dataset_names_path(self, capsys):
        code = main(["filter", "--data", "/no/dataset"])
        assert code == 2
        assert "/no/dataset" in capsys.readouterr().err

    def test_runtime_error_is_3(self, workspace, capsys):
        # far too few images for this latent size
        code = main([
            "drift", "baseline", "--data", workspace["ds"],
            "--out", str(workspace["base"] / "ae-bad"), "--latent-dim", "64",
        ])
        assert code == 3


class TestGenerate:
    def test_writes_expected_files(self, workspace):
        for name in ("images.npz", "truth.npz", "studies.jsonl", "spec.json"):
            assert os.path.exists(os.path.join(workspace["ds"], name))

    def test_deterministic_across_runs(self, tmp_path, capsys):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        for out in (a, b):
            assert main([
                "generate", "--seed", "9", "--n-studies", "10",
                "--image-size", "32", "--out", out,
            ]) == 0
        pa = np.load(os.path.join(a, "images.npz"))["pixels"]
        pb = np.load(os.path.join(b, "images.npz"))["pixels"]
        assert pa.tobytes() == pb.tobytes()

    def test_json_format(self, tmp_path, capsys):
        assert main([
            "generate", "--seed", "1", "--n-studies", "5", "--image-size", "32",
            "--out", str(tmp_path / "j"), "--format", "json",
        ]) == 0
        rows = json.loads(capsys.readouterr().out)
        assert rows[0]["studies"] == 5


class TestLifecycleCommands:
    def test_filter_reports_counts(self, workspace, capsys):
        assert main(["filter", "--data", workspace["ds"], "--format", "json"]) == 0
        row = json.loads(capsys.readouterr().out)[0]
        assert row["input_count"] == row["kept_count"] + row["removed_duplicates"] + \
            row["removed_low_complexity"] + row["removed_gate"] + row["removed_oversized_study"]

    def test_label_reports_high_agreement(self, workspace, capsys, tmp_path):
        out = str(tmp_path / "labels.json")
        assert main([
            "label-reports", "--data", workspace["ds"], "--out", out, "--format", "json"
        ]) == 0
        row = json.loads(capsys.readouterr().out)[0]
        assert row["agreement"] >= 0.99
        assert os.path.exists(out)

    def test_evaluate_table(self, workspace, capsys):
        assert main([
            "evaluate", "--model", workspace["model"], "--data", workspace["ds"],
            "--calib", workspace["calib"], "--format", "json",
        ]) == 0
        rows = json.loads(capsys.readouterr().out)
        assert rows
        for row in rows:
            assert 0.0 <= row["roc_auc"] <= 1.0
            assert "fpr_at_0.5" in row

    def test_calibration_file_is_valid_json(self, workspace):
        with open(workspace["calib"]) as fh:
            doc = json.load(fh)
        assert len(doc["opt"]) == 41
        assert all(0.0 < v < 1.0 for v in doc["opt"].values())

    def test_ensemble_selects_subset(self, workspace, capsys, tmp_path):
        manifest = str(tmp_path / "manifest.json")
        assert main([
            "ensemble", "--model", workspace["model"], "--calib", workspace["calib"],
            "--data", workspace["ds"], "--out", manifest, "--format", "json",
        ]) == 0
        row = json.loads(capsys.readouterr().out)[0]
        assert row["active"] >= 1
        with open(manifest) as fh:
            assert len(json.load(fh)["finding_ids"]) == 41

    def test_distill_runs_and_saves_student(self, workspace, capsys, tmp_path):
        student = str(tmp_path / "student.npz")
        assert main([
            "distill", "--data", workspace["ds"], "--hand", "30",
            "--out", student, "--format", "json",
        ]) == 0
        row = json.loads(capsys.readouterr().out)[0]
        assert row["hand_images"] == 30
        assert os.path.exists(student)


class TestDrift:
    def test_baseline_scan_report_round_trip(self, workspace, capsys, tmp_path):
        ae_dir = str(tmp_path / "ae")
        records = str(tmp_path / "recs.jsonl")
        assert main([
            "drift", "baseline", "--data", workspace["ds"], "--out", ae_dir,
            "--latent-dim", "4", "--max-epochs", "5", "--format", "json",
        ]) == 0
        capsys.readouterr()
        assert main([
            "drift", "scan", "--data", workspace["ds"], "--baseline", ae_dir,
            "--records", records,
        ]) == 0
        capsys.readouterr()
        assert main([
            "drift", "report", "--baseline", ae_dir, "--records", records,
            "--format", "json",
        ]) == 0
        rows = json.loads(capsys.readouterr().out)
        assert rows
        assert all("drifted" in r for r in rows)


class TestDemo:
    def test_demo_exits_zero_with_summary(self, tmp_path, capsys):
        assert main([
            "demo", "--seed", "1", "--workdir", str(tmp_path / "demo"),
            "--format", "json",
        ]) == 0
        captured = capsys.readouterr()
        rows = {r["metric"]: r["value"] for r in json.loads(captured.out)}
        assert 0.0 <= rows["teacher_roc_auc"] <= 1.0
        assert 0.0 <= rows["student_roc_auc"] <= 1.0
        assert rows["report_label_agreement"] >= 0.99
        assert any(k.startswith("drift[") and v == "DRIFTED" for k, v in rows.items())
