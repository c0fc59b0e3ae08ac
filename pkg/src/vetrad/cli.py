"""Command-line entry point for the whole lifecycle.

Exit codes: 0 success, 1 usage error, 2 validation error (bad inputs, bad
files), 3 runtime failure. Every subcommand can emit machine-readable output
via --format json or --format csv.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
import tempfile
import time

import click
import numpy as np

from . import calib as calibmod
from . import distill as distillmod
from . import drift as driftmod
from . import ensemble as ensemblemod
from . import metrics
from . import reports as reportsmod
from . import rules as rulesmod
from . import synth
from .calib import CalibrationError, CalibrationParams
from .domain import TaxonomyError, TriStateLabel, load_taxonomy
from .ingest import filter_images
from .models import MlpBackend, dropout_noise
from .pipeline.config import ConfigError, PipelineConfig, load_config
from .pipeline.orchestrator import Orchestrator
from .pipeline.service import PayloadError, PipelineService
from .train import LabeledSet, TrainConfig, TrainingError, train_model

VALIDATION_ERRORS = (
    TaxonomyError,
    CalibrationError,
    ConfigError,
    metrics.MetricError,
    ensemblemod.EnsembleError,
    rulesmod.RuleError,
    reportsmod.RuleFileError,
    PayloadError,
    FileNotFoundError,
    ValueError,
)


# -- output helpers ----------------------------------------------------------
def emit(rows: list[dict], fmt: str) -> None:
    """Print a list of flat dicts as aligned text, JSON, or CSV."""
    if fmt == "json":
        click.echo(json.dumps(rows, indent=2))
        return
    if fmt == "csv":
        if not rows:
            return
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
        click.echo(buf.getvalue().rstrip("\n"))
        return
    if not rows:
        click.echo("(no rows)")
        return
    headers = list(rows[0])
    table = [[_cell(r.get(h)) for h in headers] for r in rows]
    widths = [max(len(h), *(len(row[i]) for row in table)) for i, h in enumerate(headers)]
    click.echo("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    for row in table:
        click.echo("  ".join(c.ljust(w) for c, w in zip(row, widths)))


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


format_option = click.option(
    "--format", "fmt", type=click.Choice(["text", "json", "csv"]), default="text",
    help="Output format.",
)


def _load_dataset(path: str):
    taxonomy = load_taxonomy()
    if not os.path.isdir(path):
        raise FileNotFoundError(f"dataset directory not found: {path}")
    return synth.load_dataset(path, taxonomy), taxonomy


def _nlp_labeled_set(ds, taxonomy) -> LabeledSet:
    """Supervision from report-derived labels: uncertain and unmentioned
    findings are masked out."""
    labeler = reportsmod.ReportLabeler(reportsmod.load_rules(), taxonomy)
    rows = synth.nlp_image_labels(ds, labeler)
    n, k = len(rows), len(taxonomy.ids)
    targets = np.zeros((n, k))
    mask = np.zeros((n, k), dtype=bool)
    for i, row in enumerate(rows):
        for j, lab in enumerate(row):
            if lab is not None and lab is not TriStateLabel.UNCERTAIN:
                targets[i, j] = lab.to_float()
                mask[i, j] = True
    return LabeledSet(
        np.stack([img.pixels for img in ds.images]),
        targets, mask, tuple(img.image_id for img in ds.images),
    )


def _mean_aurocs(backend: MlpBackend, test: LabeledSet) -> dict:
    probs, _ = backend.forward(test.pixels)
    rocs, prs = [], []
    for kk in range(test.targets.shape[1]):
        y = test.targets[:, kk].round().astype(int)
        if y.sum() in (0, len(y)):
            continue
        rocs.append(metrics.auroc(probs[:, kk], y))
        prs.append(metrics.pr_auc(probs[:, kk], y))
    return {
        "roc_auc": float(np.mean(rocs)) if rocs else float("nan"),
        "pr_auc": float(np.mean(prs)) if prs else float("nan"),
    }


def _save_autoencoder(ae: driftmod.Autoencoder, baseline: np.ndarray, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    np.savez(
        os.path.join(out_dir, "autoencoder.npz"),
        input_shape=np.array(ae.input_shape),
        latent_dim=np.array(ae.latent_dim),
        baseline=baseline,
        **ae._params,
    )


def _load_autoencoder(path: str) -> tuple[driftmod.Autoencoder, np.ndarray]:
    f = os.path.join(path, "autoencoder.npz")
    if not os.path.exists(f):
        raise FileNotFoundError(f"autoencoder baseline not found: {f}")
    data = np.load(f)
    ae = driftmod.Autoencoder(
        input_shape=tuple(int(v) for v in data["input_shape"]),
        latent_dim=int(data["latent_dim"]),
        _params={k: data[k] for k in ("we", "be", "wd", "bd")},
        trained=True,
    )
    return ae, data["baseline"]


def _load_calibration(path: str) -> CalibrationParams:
    with open(path) as fh:
        return CalibrationParams.from_json(fh.read())


def _build_ensemble(models: tuple[str, ...], calibs: tuple[str, ...], taxonomy, image_size: int):
    """Ensemble from saved model/calibration files; with no models given,
    falls back to one fresh untrained member (useful for API development)."""
    if len(calibs) not in (0, len(models)):
        raise ValueError("give one --calib per --model, or none")
    members = []
    if not models:
        backend = MlpBackend(input_shape=(image_size, image_size), n_outputs=len(taxonomy.ids))
        members.append((backend, CalibrationParams(opt={f: 0.5 for f in taxonomy.ids})))
    for i, model_path in enumerate(models):
        backend = MlpBackend.load(model_path)
        if calibs:
            params = _load_calibration(calibs[i])
        else:
            params = CalibrationParams(opt={f: 0.5 for f in taxonomy.ids})
        members.append((backend, params))
    return ensemblemod.Ensemble(members=members, finding_ids=taxonomy.ids)


# -- command group -----------------------------------------------------------
@click.group(name="vetrad")
def cli() -> None:
    """Veterinary radiograph AI lifecycle tools."""


@cli.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-studies", type=int, default=50, show_default=True)
@click.option("--n-orgs", type=int, default=5, show_default=True)
@click.option("--image-size", type=int, default=64, show_default=True)
@click.option("--brightness-shift", type=float, default=0.0, show_default=True)
@click.option("--invert", is_flag=True, default=False)
@click.option("--start-timestamp", type=float, default=1_753_000_000.0, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Output dataset directory.")
@format_option
def generate(seed, n_studies, n_orgs, image_size, brightness_shift, invert, start_timestamp, out, fmt):
    """Generate a synthetic dataset with planted labels and reports."""
    taxonomy = load_taxonomy()
    spec = synth.SyntheticSpec(
        seed=seed, n_studies=n_studies, n_organizations=n_orgs,
        image_size=image_size, brightness_shift=brightness_shift,
        invert=invert, start_timestamp=start_timestamp,
    )
    ds = synth.generate(spec, taxonomy)
    synth.save_dataset(ds, out)
    emit(
        [
            {
                "studies": len(ds.studies),
                "images": len(ds.images),
                "organizations": len({i.organization_id for i in ds.images}),
                "out": out,
            }
        ],
        fmt,
    )


@cli.command("filter")
@click.option("--data", required=True, type=click.Path(), help="Dataset directory.")
@click.option("--entropy-threshold", type=float, default=1.0, show_default=True)
@format_option
def filter_cmd(data, entropy_threshold, fmt):
    """Run the ingest filter and report what was removed."""
    ds, _ = _load_dataset(data)
    _, report = filter_images(ds.images, entropy_threshold=entropy_threshold)
    emit([report.to_dict()], fmt)


@cli.command("label-reports")
@click.option("--data", required=True, type=click.Path())
@click.option("--out", type=click.Path(), help="Write per-study labels as JSON.")
@format_option
def label_reports(data, out, fmt):
    """Label the dataset's reports and score agreement with planted labels."""
    ds, taxonomy = _load_dataset(data)
    labeler = reportsmod.ReportLabeler(reportsmod.load_rules(), taxonomy)
    per_study: dict[str, dict[str, str]] = {}
    total = hits = 0
    for study in ds.studies:
        result = labeler.label_report(study.report_text or "")
        got = {f.id: lab.value for f, lab in result.labels.items()}
        per_study[study.study_id] = got
        for fid, want in ds.study_tristate[study.study_id].items():
            total += 1
            hits += got.get(fid) == want.value
    if out:
        with open(out, "w") as fh:
            json.dump(per_study, fh, indent=2)
    emit(
        [{"studies": len(per_study), "labels": total, "agreement": hits / total if total else 1.0}],
        fmt,
    )


@cli.command()
@click.option("--data", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(), help="Model output path (.npz).")
@click.option("--labels", type=click.Choice(["truth", "nlp"]), default="nlp", show_default=True)
@click.option("--hidden", type=int, default=32, show_default=True)
@click.option("--max-epochs", type=int, default=30, show_default=True)
@click.option("--learning-rate", type=float, default=0.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@format_option
def train(data, out, labels, hidden, max_epochs, learning_rate, seed, fmt):
    """Train a multi-label model on ground-truth or report-derived labels."""
    ds, taxonomy = _load_dataset(data)
    labeled = ds.to_labeled_set() if labels == "truth" else _nlp_labeled_set(ds, taxonomy)
    backend = MlpBackend(
        input_shape=ds.images[0].pixels.shape,
        n_outputs=len(taxonomy.ids), hidden_units=hidden, seed=seed,
    )
    cfg = TrainConfig(max_epochs=max_epochs, learning_rate=learning_rate, seed=seed)
    result = train_model(backend, labeled, cfg=cfg)
    backend.save(out)
    emit(
        [
            {
                "images": len(labeled),
                "label_source": labels,
                "stopped_epoch": result.stopped_epoch,
                "best_epoch": result.best_epoch,
                "val_loss": result.val_losses[result.best_epoch - 1],
                "out": out,
            }
        ],
        fmt,
    )


@cli.command()
@click.option("--data", required=True, type=click.Path())
@click.option("--test-data", type=click.Path(), help="Held-out dataset for AUROC comparison.")
@click.option("--hand", type=int, default=100, show_default=True,
              help="Images with ground-truth labels; the rest get report labels.")
@click.option("--out", required=True, type=click.Path(), help="Student model output (.npz).")
@click.option("--lam", type=float, default=0.5, show_default=True)
@click.option("--hidden", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@format_option
def distill(data, test_data, hand, out, lam, hidden, seed, fmt):
    """Teacher-student distillation: hand labels plus blended pseudo-labels."""
    ds, taxonomy = _load_dataset(data)
    full = ds.to_labeled_set()
    if not 0 < hand < len(full):
        raise ValueError(f"--hand must be between 1 and {len(full) - 1}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(full))
    hand_set = full.subset(order[:hand])
    rest = order[hand:]
    labeler = reportsmod.ReportLabeler(reportsmod.load_rules(), taxonomy)
    nlp_rows = synth.nlp_image_labels(ds, labeler)
    shape = ds.images[0].pixels.shape
    teacher = MlpBackend(shape, len(taxonomy.ids), hidden_units=hidden, seed=seed)
    student = MlpBackend(shape, len(taxonomy.ids), hidden_units=hidden, seed=seed + 1)
    run = distillmod.run_distillation(
        teacher, student, hand_set,
        full.pixels[rest], [nlp_rows[i] for i in rest],
        noise=dropout_noise(seed),
        train_cfg=TrainConfig(seed=seed),
        blend_cfg=distillmod.BlendConfig(lam=lam),
    )
    student.save(out)
    row = {"hand_images": hand, "pseudo_images": len(rest), "lambda": lam, "out": out}
    if test_data:
        test_ds, _ = _load_dataset(test_data)
        test = test_ds.to_labeled_set()
        row["teacher_roc_auc"] = _mean_aurocs(run.teacher, test)["roc_auc"]
        row["student_roc_auc"] = _mean_aurocs(run.student, test)["roc_auc"]
    emit([row], fmt)


@cli.command()
@click.option("--model", required=True, type=click.Path())
@click.option("--data", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(), help="Calibration JSON output.")
@format_option
def calibrate(model, data, out, fmt):
    """Fit per-finding operating points from model scores on a dataset."""
    ds, taxonomy = _load_dataset(data)
    backend = MlpBackend.load(model)
    labeled = ds.to_labeled_set()
    probs, _ = backend.forward(labeled.pixels)
    opts: dict[str, float] = {}
    js: dict[str, float] = {}
    fitted = 0
    for k, fid in enumerate(taxonomy.ids):
        y = labeled.targets[:, k].round().astype(int)
        if 0 < y.sum() < len(y):
            opts[fid], js[fid] = calibmod.fit_opt(list(zip(probs[:, k], y)))
            fitted += 1
        else:
            opts[fid] = 0.5  # no signal for this finding in the dataset
    params = CalibrationParams(
        opt=opts, youden_j=js, fitted_on=data, model_version=backend.name
    )
    with open(out, "w") as fh:
        fh.write(params.to_json())
    emit([{"findings_fitted": fitted, "findings_defaulted": len(opts) - fitted, "out": out}], fmt)


@cli.command()
@click.option("--model", required=True, type=click.Path())
@click.option("--data", required=True, type=click.Path())
@click.option("--calib", type=click.Path(), help="Calibration JSON to apply before thresholding.")
@format_option
def evaluate(model, data, calib, fmt):
    """Per-finding AUROC / PR-AUC (and operating points when calibrated)."""
    ds, taxonomy = _load_dataset(data)
    backend = MlpBackend.load(model)
    labeled = ds.to_labeled_set()
    probs, _ = backend.forward(labeled.pixels)
    params = _load_calibration(calib) if calib else None
    rows = []
    for k, fid in enumerate(taxonomy.ids):
        y = labeled.targets[:, k].round().astype(int)
        if y.sum() < metrics.MIN_POSITIVES or y.sum() == len(y):
            continue
        s = probs[:, k]
        row = {
            "finding": fid,
            "positives": int(y.sum()),
            "roc_auc": metrics.auroc(s, y),
            "pr_auc": metrics.pr_auc(s, y),
        }
        if params is not None:
            cal = np.array([calibmod.piecewise_transform(v, params.opt[fid]) for v in s])
            fpr, sens = metrics.operating_point(cal, y, 0.5)
            row["fpr_at_0.5"] = fpr
            row["sens_at_0.5"] = sens
        rows.append(row)
    if not rows:
        raise ValueError("no finding has enough positives to evaluate")
    emit(rows, fmt)


@cli.command("ensemble")
@click.option("--model", "models", multiple=True, required=True, type=click.Path())
@click.option("--calib", "calibs", multiple=True, type=click.Path())
@click.option("--data", required=True, type=click.Path(),
              help="Dataset used for best-subset selection.")
@click.option("--out", type=click.Path(), help="Write the selected manifest JSON.")
@format_option
def ensemble_cmd(models, calibs, data, out, fmt):
    """Build an ensemble and select the best member subset by mean AUROC."""
    ds, taxonomy = _load_dataset(data)
    ens = _build_ensemble(models, calibs, taxonomy, ds.images[0].pixels.shape[0])
    labeled = ds.to_labeled_set()
    member_scores = [
        ens._member_scores(b, p, labeled.pixels) for b, p in ens.members
    ]
    bits = ensemblemod.best_subset(member_scores, labeled.targets, labeled.mask)
    best = ensemblemod.Ensemble(
        members=ens.members, finding_ids=taxonomy.ids, subset_mask=bits
    )
    avg = np.mean([s for s, on in zip(member_scores, bits) if on], axis=0)
    score = ensemblemod._mean_auroc(avg, labeled.targets, labeled.mask)
    if out:
        with open(out, "w") as fh:
            fh.write(best.manifest_json())
    emit(
        [
            {
                "members": len(ens.members),
                "active": sum(best.subset_mask),
                "subset_mask": "".join("1" if b else "0" for b in best.subset_mask),
                "mean_roc_auc": score,
            }
        ],
        fmt,
    )


@cli.group()
def drift():
    """Autoencoder-based input drift monitoring."""


@drift.command()
@click.option("--data", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(), help="Baseline output directory.")
@click.option("--latent-dim", type=int, default=32, show_default=True)
@click.option("--max-epochs", type=int, default=30, show_default=True)
@format_option
def baseline(data, out, latent_dim, max_epochs, fmt):
    """Train the reference autoencoder and record baseline errors."""
    ds, _ = _load_dataset(data)
    pixels = np.stack([i.pixels for i in ds.images])
    cfg = driftmod.AutoencoderConfig(latent_dim=latent_dim, max_epochs=max_epochs)
    ae, errors = driftmod.train_autoencoder(pixels, cfg)
    _save_autoencoder(ae, errors, out)
    emit(
        [
            {
                "images": len(pixels),
                "baseline_median": float(np.median(errors)),
                "baseline_p95": float(np.percentile(errors, 95)),
                "out": out,
            }
        ],
        fmt,
    )


@drift.command()
@click.option("--data", required=True, type=click.Path())
@click.option("--baseline", "baseline_dir", required=True, type=click.Path())
@click.option("--records", required=True, type=click.Path(),
              help="Reconstruction-record JSONL file to append to.")
@format_option
def scan(data, baseline_dir, records, fmt):
    """Score a dataset's images against the baseline autoencoder."""
    ds, _ = _load_dataset(data)
    ae, _errors = _load_autoencoder(baseline_dir)
    with open(records, "a") as fh:
        for img in ds.images:
            rec = driftmod.ReconstructionRecord(
                image_id=img.image_id,
                organization_id=img.organization_id,
                timestamp=img.acquired_at,
                l2_error=driftmod.reconstruction_error(ae, img.pixels),
            )
            fh.write(rec.to_json() + "\n")
    emit([{"scanned": len(ds.images), "records": records}], fmt)


@drift.command()
@click.option("--baseline", "baseline_dir", required=True, type=click.Path())
@click.option("--records", required=True, type=click.Path())
@click.option("--alpha", type=float, default=0.01, show_default=True)
@format_option
def report(baseline_dir, records, alpha, fmt):
    """Weekly error quantiles and drift verdicts from scanned records."""
    _ae, errors = _load_autoencoder(baseline_dir)
    if not os.path.exists(records):
        raise FileNotFoundError(f"records file not found: {records}")
    with open(records) as fh:
        recs = [driftmod.ReconstructionRecord.from_json(line) for line in fh if line.strip()]
    verdicts = driftmod.weekly_verdicts(list(errors), recs, alpha=alpha)
    rows = []
    for v in verdicts:
        rows.append(
            {
                "window": v.window_id,
                "count": v.count,
                "p50": v.window_quantiles.get("p50", float("nan")),
                "ks_stat": v.statistic,
                "p_value": v.p_value,
                "drifted": v.drifted,
                "inconclusive": v.inconclusive,
            }
        )
    emit(rows, fmt)


@cli.command()
@click.option("--config", "config_path", type=click.Path(), help="KEY=VALUE config file.")
@click.option("--model", "models", multiple=True, type=click.Path())
@click.option("--calib", "calibs", multiple=True, type=click.Path())
@click.option("--image-size", type=int, default=64, show_default=True,
              help="Expected input size when no model files are given.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--drift-baseline", "drift_baseline", type=click.Path(),
              help="Autoencoder baseline dir; enables online drift monitoring.")
@click.option("--drift-records", "drift_records", type=click.Path(),
              help="Preload reconstruction records (JSON lines) into the monitor.")
def serve(config_path, models, calibs, image_size, host, port, drift_baseline, drift_records):
    """Run the asynchronous inference service."""
    import uvicorn

    from .pipeline.api import create_app
    from .pipeline.service import DriftMonitor

    taxonomy = load_taxonomy()
    config = load_config(config_path) if config_path else PipelineConfig()
    ens = _build_ensemble(models, calibs, taxonomy, image_size)
    monitor = None
    if drift_baseline:
        ae, errors = _load_autoencoder(drift_baseline)
        monitor = DriftMonitor(ae, np.asarray(errors), alpha=config.drift_alpha)
        if drift_records:
            if not os.path.exists(drift_records):
                raise FileNotFoundError(f"records file not found: {drift_records}")
            with open(drift_records) as fh:
                monitor.records.extend(
                    driftmod.ReconstructionRecord.from_json(line)
                    for line in fh if line.strip()
                )
    service = PipelineService(config, Orchestrator(ens), drift_monitor=monitor)
    service.start()
    try:
        uvicorn.run(create_app(service), host=host, port=port, log_level="warning")
    finally:
        service.close()


@cli.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workdir", type=click.Path(), help="Where to keep artifacts (default: temp dir).")
@format_option
def demo(seed, workdir, fmt):
    """Run the full lifecycle end to end on synthetic data."""
    t0 = time.time()
    base = workdir or tempfile.mkdtemp(prefix="vetrad-demo-")
    os.makedirs(base, exist_ok=True)
    taxonomy = load_taxonomy()
    labeler = reportsmod.ReportLabeler(reportsmod.load_rules(), taxonomy)
    size = 32
    week = 7 * 86400.0

    click.echo(f"workdir: {base}", err=True)
    train_ds = synth.generate(
        synth.SyntheticSpec(seed=seed, n_studies=150, image_size=size), taxonomy
    )
    test_ds = synth.generate(
        synth.SyntheticSpec(seed=seed + 1, n_studies=80, image_size=size), taxonomy
    )

    # report labeling quality
    total = hits = 0
    for study in train_ds.studies:
        got = {f.id: lab for f, lab in labeler.label_report(study.report_text).labels.items()}
        for fid, want in train_ds.study_tristate[study.study_id].items():
            total += 1
            hits += got.get(fid) is want
    agreement = hits / total

    # distillation: 100 hand-labeled images, the rest report-labeled
    full = train_ds.to_labeled_set()
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(full))
    hand_set = full.subset(order[:100])
    rest = order[100:]
    nlp_rows = synth.nlp_image_labels(train_ds, labeler)
    teacher = MlpBackend((size, size), len(taxonomy.ids), seed=seed)
    student = MlpBackend((size, size), len(taxonomy.ids), seed=seed + 1)
    run = distillmod.run_distillation(
        teacher, student, hand_set, full.pixels[rest],
        [nlp_rows[i] for i in rest],
        noise=dropout_noise(seed), train_cfg=TrainConfig(seed=seed),
    )
    test = test_ds.to_labeled_set()
    teacher_auc = _mean_aurocs(teacher, test)["roc_auc"]
    student_auc = _mean_aurocs(student, test)["roc_auc"]

    # drift: baseline on training images, then a clean and a shifted week
    pixels = np.stack([i.pixels for i in train_ds.images])
    ae, errors = driftmod.train_autoencoder(
        pixels, driftmod.AutoencoderConfig(latent_dim=16, max_epochs=15)
    )
    shifted_ds = synth.generate(
        synth.SyntheticSpec(
            seed=seed + 2, n_studies=80, image_size=size,
            brightness_shift=0.5,
            start_timestamp=train_ds.spec.start_timestamp + 2 * week,
        ),
        taxonomy,
    )
    records = [
        driftmod.ReconstructionRecord(
            i.image_id, i.organization_id, i.acquired_at,
            driftmod.reconstruction_error(ae, i.pixels),
        )
        for i in list(test_ds.images) + list(shifted_ds.images)
    ]
    verdicts = driftmod.weekly_verdicts(list(errors), records)

    rows = [
        {"metric": "report_label_agreement", "value": agreement},
        {"metric": "teacher_roc_auc", "value": teacher_auc},
        {"metric": "student_roc_auc", "value": student_auc},
    ]
    for v in verdicts:
        rows.append({"metric": f"drift[{v.window_id}]", "value": "DRIFTED" if v.drifted else "ok"})
    rows.append({"metric": "elapsed_s", "value": round(time.time() - t0, 1)})
    emit(rows, fmt)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        if exc.ctx is not None:
            click.echo(exc.ctx.get_usage(), err=True)
        return 1
    except click.Abort:
        return 1
    except VALIDATION_ERRORS as exc:
        click.echo(f"validation error: {exc}", err=True)
        return 2
    except (TrainingError, distillmod.DistillationError, driftmod.DriftError,
            rulesmod.NonTerminationError, RuntimeError, OSError) as exc:
        click.echo(f"runtime error: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
