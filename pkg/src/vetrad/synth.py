"""Deterministic synthetic radiograph generator.

Stands in for a real corpus: images are composed geometric primitives whose
presence is linked to planted finding labels, studies carry template reports
whose Findings sections encode the planted tri-state labels, and organizations
impart seeded style offsets.  Everything is reproducible from the spec's seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .domain import BodyPart, ImageRecord, Study, Taxonomy, TriStateLabel
from .train import LabeledSet

MARKER_SIZE = 6  # orientation marker corner blocks


def stamp_orientation_marker(px: np.ndarray) -> None:
    """Canonical pose signature: bright top-left block, dimmer top-right."""
    m = MARKER_SIZE
    px[:m, :m] = 1.0
    px[:m, -m:] = 0.7
    px[-m:, :m] = 0.05
    px[-m:, -m:] = 0.05


def _ellipse(px: np.ndarray, cy: float, cx: float, ry: float, rx: float, value: float) -> None:
    h, w = px.shape
    y, x = np.ogrid[:h, :w]
    mask = ((y - cy) / ry) ** 2 + ((x - cx) / rx) ** 2 <= 1.0
    px[mask] = value


def _band(px: np.ndarray, r0: float, r1: float, value: float) -> None:
    h = px.shape[0]
    px[int(r0 * h) : int(r1 * h), MARKER_SIZE:-MARKER_SIZE] = value


def _diagonal(px: np.ndarray, value: float = 0.95) -> None:
    h, w = px.shape
    for i in range(h // 4, 3 * h // 4):
        j = int(i * w / h)
        px[i, max(0, j - 1) : j + 2] = value


# finding id -> drawing routine; regions are disjoint so features are separable
FEATURE_DRAWERS: dict[str, Callable[[np.ndarray], None]] = {
    "cardiomegaly": lambda px: _ellipse(
        px, px.shape[0] * 0.45, px.shape[1] * 0.35, px.shape[0] * 0.16, px.shape[1] * 0.13, 0.95
    ),
    "pleural_effusion": lambda px: _band(px, 0.85, 0.95, 0.9),
    "pulmonary_mass": lambda px: _ellipse(
        px, px.shape[0] * 0.25, px.shape[1] * 0.75, px.shape[0] * 0.09, px.shape[1] * 0.09, 0.9
    ),
    "pneumothorax": lambda px: _band(px, 0.12, 0.2, 0.02),
    "spondylosis": lambda px: _band(px, 0.7, 0.74, 0.85),
    "fracture_or_luxation": _diagonal,
}

FEATURE_FINDINGS = tuple(FEATURE_DRAWERS)

# report sentence templates per tri-state value
_TEMPLATES = {
    TriStateLabel.POSITIVE: "Moderate {phrase} is present",
    TriStateLabel.NEGATIVE: "No evidence of {phrase}",
    TriStateLabel.UNCERTAIN: "{phrase} cannot be ruled out",
}

_REPORT_PHRASES = {
    "cardiomegaly": "cardiomegaly",
    "pleural_effusion": "pleural effusion",
    "pulmonary_mass": "pulmonary mass",
    "pneumothorax": "pneumothorax",
    "spondylosis": "spondylosis",
    "fracture_or_luxation": "fracture",
}


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int = 0
    n_studies: int = 50
    images_per_study: tuple[int, ...] = (1, 2, 3)
    n_organizations: int = 5
    image_size: int = 64
    positive_rate: float = 0.3
    uncertain_rate: float = 0.05
    feature_show_rate: float = 0.85  # chance a positive study's image shows the feature
    brightness_shift: float = 0.0  # drift knob
    invert: bool = False  # drift knob
    org_style_sigma: float = 0.02  # per-organization brightness offset spread
    start_timestamp: float = 1_753_000_000.0
    study_interval: float = 3600.0


@dataclass
class SyntheticDataset:
    spec: SyntheticSpec
    taxonomy: Taxonomy
    images: list[ImageRecord] = field(default_factory=list)
    studies: list[Study] = field(default_factory=list)
    image_truth: dict[str, np.ndarray] = field(default_factory=dict)  # 41-dim binary
    study_tristate: dict[str, dict[str, TriStateLabel]] = field(default_factory=dict)

    @property
    def image_index(self) -> dict[str, ImageRecord]:
        return {img.image_id: img for img in self.images}

    def to_labeled_set(self) -> LabeledSet:
        """Per-image ground-truth targets over all 41 findings (fully observed)."""
        pixels = np.stack([img.pixels for img in self.images])
        targets = np.stack([self.image_truth[img.image_id] for img in self.images])
        mask = np.ones_like(targets, dtype=bool)
        return LabeledSet(pixels, targets, mask, tuple(i.image_id for i in self.images))


def render_image(
    rng: np.random.Generator,
    size: int,
    positive_findings: set[str],
    brightness: float = 0.0,
    invert: bool = False,
) -> np.ndarray:
    px = rng.uniform(0.2, 0.4, size=(size, size))
    _ellipse(px, size * 0.5, size * 0.5, size * 0.42, size * 0.38, 0.55)
    px += rng.normal(0, 0.03, size=(size, size))
    for fid in positive_findings:
        FEATURE_DRAWERS[fid](px)
    stamp_orientation_marker(px)
    px = px + brightness
    if invert:
        px = 1.0 - px
    return np.clip(px, 0.0, 1.0)


def _report_text(tristate: dict[str, TriStateLabel]) -> str:
    lines = ["FINDINGS:"]
    for fid in FEATURE_FINDINGS:
        phrase = _REPORT_PHRASES[fid]
        lines.append(_TEMPLATES[tristate[fid]].format(phrase=phrase) + ".")
    lines.append("IMPRESSION: Findings as described above.")
    return "\n".join(lines)


def save_dataset(ds: SyntheticDataset, out_dir: str) -> None:
    """Persist a dataset as images.npz + truth.npz + studies.jsonl + spec.json."""
    os.makedirs(out_dir, exist_ok=True)
    np.savez_compressed(
        os.path.join(out_dir, "images.npz"),
        pixels=np.stack([i.pixels for i in ds.images]),
        image_ids=np.array([i.image_id for i in ds.images]),
        study_ids=np.array([i.study_id for i in ds.images]),
        patient_ids=np.array([i.patient_id for i in ds.images]),
        org_ids=np.array([i.organization_id for i in ds.images]),
        species=np.array([i.species for i in ds.images]),
        body_parts=np.array([i.body_part.value for i in ds.images]),
        acquired_at=np.array([i.acquired_at for i in ds.images]),
    )
    np.savez_compressed(
        os.path.join(out_dir, "truth.npz"),
        targets=np.stack([ds.image_truth[i.image_id] for i in ds.images]),
        finding_ids=np.array(ds.taxonomy.ids),
    )
    with open(os.path.join(out_dir, "studies.jsonl"), "w") as fh:
        for study in ds.studies:
            fh.write(
                json.dumps(
                    {
                        "study_id": study.study_id,
                        "organization_id": study.organization_id,
                        "image_ids": list(study.image_ids),
                        "report_text": study.report_text,
                        "metadata": dict(study.metadata),
                        "tristate": {
                            fid: lab.value
                            for fid, lab in ds.study_tristate[study.study_id].items()
                        },
                    }
                )
                + "\n"
            )
    with open(os.path.join(out_dir, "spec.json"), "w") as fh:
        json.dump(asdict(ds.spec), fh, indent=2)


def load_dataset(path: str, taxonomy: Taxonomy) -> SyntheticDataset:
    with open(os.path.join(path, "spec.json")) as fh:
        raw = json.load(fh)
    raw["images_per_study"] = tuple(raw["images_per_study"])
    spec = SyntheticSpec(**raw)
    ds = SyntheticDataset(spec=spec, taxonomy=taxonomy)
    arrays = np.load(os.path.join(path, "images.npz"))
    truth = np.load(os.path.join(path, "truth.npz"))
    if list(truth["finding_ids"]) != list(taxonomy.ids):
        raise ValueError(f"{path}: stored finding ids do not match the taxonomy")
    for k in range(len(arrays["image_ids"])):
        image_id = str(arrays["image_ids"][k])
        ds.images.append(
            ImageRecord(
                image_id=image_id,
                study_id=str(arrays["study_ids"][k]),
                patient_id=str(arrays["patient_ids"][k]),
                organization_id=str(arrays["org_ids"][k]),
                species=str(arrays["species"][k]),
                body_part=BodyPart(str(arrays["body_parts"][k])),
                acquired_at=float(arrays["acquired_at"][k]),
                pixels=arrays["pixels"][k],
            )
        )
        ds.image_truth[image_id] = truth["targets"][k]
    with open(os.path.join(path, "studies.jsonl")) as fh:
        for line in fh:
            doc = json.loads(line)
            ds.studies.append(
                Study(
                    study_id=doc["study_id"],
                    organization_id=doc["organization_id"],
                    image_ids=tuple(doc["image_ids"]),
                    report_text=doc["report_text"],
                    metadata=doc["metadata"],
                )
            )
            ds.study_tristate[doc["study_id"]] = {
                fid: TriStateLabel(v) for fid, v in doc["tristate"].items()
            }
    return ds


def nlp_image_labels(ds: SyntheticDataset, labeler) -> list[list[TriStateLabel | None]]:
    """Label every study report and propagate to images, in ds.images order.

    Returns one row per image with a TriStateLabel (or None for unmentioned or
    body-part-masked findings) per taxonomy finding.
    """
    from .reports import propagate_to_images

    index = ds.image_index
    finding_ids = ds.taxonomy.ids
    rows: dict[str, list[TriStateLabel | None]] = {}
    for study in ds.studies:
        labels = labeler.label_report(study.report_text or "")
        per_image = propagate_to_images(study, labels, index)
        for image_id, label_map in per_image.items():
            row: list[TriStateLabel | None] = [None] * len(finding_ids)
            for finding, lab in label_map.items():
                row[finding_ids.index(finding.id)] = lab
            rows[image_id] = row
    return [rows[img.image_id] for img in ds.images]


def generate(spec: SyntheticSpec, taxonomy: Taxonomy) -> SyntheticDataset:
    """Generate studies, images, truth labels, and reports; byte-deterministic."""
    rng = np.random.default_rng(spec.seed)
    ds = SyntheticDataset(spec=spec, taxonomy=taxonomy)
    finding_ids = taxonomy.ids
    org_offsets = rng.normal(0, spec.org_style_sigma, spec.n_organizations)
    for s in range(spec.n_studies):
        study_id = f"study-{spec.seed}-{s:05d}"
        org_i = int(rng.integers(0, spec.n_organizations))
        org_id = f"org-{org_i:03d}"
        species = "feline" if rng.random() < 0.3 else "canine"
        tristate: dict[str, TriStateLabel] = {}
        for fid in FEATURE_FINDINGS:
            u = rng.random()
            if u < spec.positive_rate:
                tristate[fid] = TriStateLabel.POSITIVE
            elif u < spec.positive_rate + spec.uncertain_rate:
                tristate[fid] = TriStateLabel.UNCERTAIN
            else:
                tristate[fid] = TriStateLabel.NEGATIVE
        ds.study_tristate[study_id] = dict(tristate)
        n_images = int(rng.choice(spec.images_per_study))
        image_ids = []
        acquired = spec.start_timestamp + s * spec.study_interval
        for k in range(n_images):
            image_id = f"{study_id}-img{k}"
            shown: set[str] = set()
            truth = np.zeros(len(finding_ids))
            for fid in FEATURE_FINDINGS:
                state = tristate[fid]
                if state is TriStateLabel.POSITIVE:
                    show = rng.random() < spec.feature_show_rate
                elif state is TriStateLabel.UNCERTAIN:
                    show = rng.random() < 0.5
                else:
                    show = False
                if show:
                    shown.add(fid)
                    truth[finding_ids.index(fid)] = 1.0
            pixels = render_image(
                rng, spec.image_size, shown,
                brightness=org_offsets[org_i] + spec.brightness_shift,
                invert=spec.invert,
            )
            ds.images.append(
                ImageRecord(
                    image_id=image_id,
                    study_id=study_id,
                    patient_id=f"patient-{s:05d}",
                    organization_id=org_id,
                    species=species,
                    body_part=BodyPart.THORAX,
                    acquired_at=acquired + k,
                    pixels=pixels,
                )
            )
            ds.image_truth[image_id] = truth
            image_ids.append(image_id)
        ds.studies.append(
            Study(
                study_id=study_id,
                organization_id=org_id,
                image_ids=tuple(image_ids),
                report_text=_report_text(tristate),
                metadata={"species": species, "expected_images": str(n_images)},
            )
        )
    return ds
