"""Finding taxonomy, core data types, and body-part label masking."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Optional

import numpy as np
import yaml

EXPECTED_FINDING_COUNT = 41


class TaxonomyError(ValueError):
    """Raised when a taxonomy file is malformed or fails validation."""


class BodyPart(str, enum.Enum):
    THORAX = "thorax"
    ABDOMEN = "abdomen"
    PELVIS = "pelvis"
    LIMB = "limb"
    SPINE = "spine"
    SKULL = "skull"
    NECK = "neck"
    WHOLE_BODY = "whole_body"
    UNKNOWN = "unknown"


class FindingGroup(str, enum.Enum):
    CARDIOVASCULAR = "Cardiovascular"
    PULMONARY_STRUCTURES = "PulmonaryStructures"
    PLEURAL_SPACE = "PleuralSpace"
    MEDIASTINAL_STRUCTURES = "MediastinalStructures"
    EXTRA_THORACIC = "ExtraThoracic"


class TriStateLabel(enum.Enum):
    """Per-finding annotation: negative (0), positive (1), or uncertain (u)."""

    NEGATIVE = "0"
    POSITIVE = "1"
    UNCERTAIN = "u"

    def to_float(self) -> float:
        """Numeric coercion; defined only for the determinate states."""
        if self is TriStateLabel.NEGATIVE:
            return 0.0
        if self is TriStateLabel.POSITIVE:
            return 1.0
        raise ValueError("uncertain label has no numeric value")


@dataclass(frozen=True)
class Finding:
    id: str
    display_name: str
    group: FindingGroup
    allowed_body_parts: frozenset[BodyPart]

    def allows(self, part: BodyPart) -> bool:
        # Unknown masks nothing by decision: prefer label noise over label loss.
        return part is BodyPart.UNKNOWN or part in self.allowed_body_parts


@dataclass(frozen=True)
class Taxonomy:
    """Ordered, validated collection of the 41 findings."""

    findings: tuple[Finding, ...]

    def __post_init__(self) -> None:
        ids = [f.id for f in self.findings]
        if len(set(ids)) != len(ids):
            raise TaxonomyError("duplicate finding ids")
        if len(self.findings) != EXPECTED_FINDING_COUNT:
            raise TaxonomyError(
                f"expected {EXPECTED_FINDING_COUNT} findings, got {len(self.findings)}"
            )
        for f in self.findings:
            if not f.allowed_body_parts:
                raise TaxonomyError(f"finding {f.id} has no allowed body parts")

    def __len__(self) -> int:
        return len(self.findings)

    def __iter__(self):
        return iter(self.findings)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(f.id for f in self.findings)

    def by_id(self, finding_id: str) -> Finding:
        try:
            return self._index[finding_id]
        except KeyError:
            raise KeyError(f"unknown finding id: {finding_id}") from None

    def index_of(self, finding_id: str) -> int:
        return self.ids.index(finding_id)

    @property
    def _index(self) -> dict[str, Finding]:
        d = self.__dict__.get("_index_cache")
        if d is None:
            d = {f.id: f for f in self.findings}
            object.__setattr__(self, "_index_cache", d)
        return d

    def group_counts(self) -> dict[FindingGroup, int]:
        counts: dict[FindingGroup, int] = {}
        for f in self.findings:
            counts[f.group] = counts.get(f.group, 0) + 1
        return counts

    def to_dict(self) -> dict:
        return {
            "findings": [
                {
                    "id": f.id,
                    "display_name": f.display_name,
                    "group": f.group.value,
                    "allowed_body_parts": sorted(p.value for p in f.allowed_body_parts),
                }
                for f in self.findings
            ]
        }


def _parse_finding(entry: dict, position: int) -> Finding:
    try:
        group = FindingGroup(entry["group"])
        parts = frozenset(BodyPart(p) for p in entry["allowed_body_parts"])
        return Finding(
            id=str(entry["id"]),
            display_name=str(entry["display_name"]),
            group=group,
            allowed_body_parts=parts,
        )
    except (KeyError, ValueError) as exc:
        raise TaxonomyError(f"bad finding entry #{position}: {exc}") from exc


def load_taxonomy(config_path: Optional[str] = None) -> Taxonomy:
    """Load the finding taxonomy from a YAML file (packaged default if None)."""
    if config_path is None:
        text = resources.files("vetrad.data").joinpath("taxonomy.yaml").read_text()
        source = "<packaged taxonomy.yaml>"
    else:
        with open(config_path, "r", encoding="utf-8") as fh:
            text = fh.read()
        source = config_path
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f" at line {mark.line + 1}" if mark is not None else ""
        raise TaxonomyError(f"cannot parse {source}{line}: {exc}") from exc
    if not isinstance(doc, dict) or "findings" not in doc:
        raise TaxonomyError(f"{source}: missing top-level 'findings' list")
    findings = tuple(
        _parse_finding(e, i) for i, e in enumerate(doc["findings"])
    )
    return Taxonomy(findings)


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    study_id: str
    patient_id: str
    organization_id: str
    species: str  # canine | feline | other
    body_part: BodyPart
    acquired_at: float  # unix timestamp, UTC
    pixels: np.ndarray  # 2-D grayscale, values in [0, 1]

    def __post_init__(self) -> None:
        px = self.pixels
        if px.ndim == 3:
            # multi-channel inputs collapse to grayscale by mean at ingest
            object.__setattr__(self, "pixels", px.mean(axis=2))
            px = self.pixels
        if px.ndim != 2:
            raise ValueError("pixels must be a 2-D grayscale array")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")


MAX_STUDY_IMAGES = 10


@dataclass(frozen=True)
class Study:
    study_id: str
    organization_id: str
    image_ids: tuple[str, ...]
    report_text: Optional[str] = None
    metadata: Mapping[str, str] = field(default_factory=dict)


def mask_labels(
    image: ImageRecord,
    study_labels: Mapping[Finding, TriStateLabel],
) -> dict[Finding, TriStateLabel]:
    """Drop labels for findings the image's body part cannot show.

    Pure and idempotent; never changes a surviving label's value.
    """
    return {
        finding: label
        for finding, label in study_labels.items()
        if finding.allows(image.body_part)
    }
