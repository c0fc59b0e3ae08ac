"""Pattern-based tri-state labeling of free-text radiology reports.

Labels are extracted from the report's Findings section only: each finding
mention is classified negative when a negation cue falls inside a fixed token
window around it, uncertain when an uncertainty cue applies (uncertainty beats
negation), and positive otherwise.  Across mentions the strongest state wins
(positive > uncertain > negative).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Optional

import yaml

from .domain import (
    BodyPart,
    Finding,
    ImageRecord,
    Study,
    Taxonomy,
    TriStateLabel,
    mask_labels,
)


class RuleFileError(ValueError):
    pass


@dataclass(frozen=True)
class PatternRuleSet:
    mention_phrases: Mapping[str, tuple[str, ...]]  # finding id -> phrases
    negation_cues: tuple[str, ...]
    uncertainty_cues: tuple[str, ...]
    window_tokens: int = 6

    def validate(self, taxonomy: Taxonomy) -> None:
        for finding in taxonomy:
            phrases = self.mention_phrases.get(finding.id)
            if not phrases:
                raise RuleFileError(f"finding {finding.id} has no mention phrases")
            if any(not p.strip() for p in phrases):
                raise RuleFileError(f"finding {finding.id} has an empty phrase")


def load_rules(path: Optional[str] = None) -> PatternRuleSet:
    """Load labeler rules from YAML (packaged default if None)."""
    if path is None:
        text = resources.files("vetrad.data").joinpath("labeler_rules.yaml").read_text()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise RuleFileError(f"cannot parse labeler rules: {exc}") from exc
    return PatternRuleSet(
        mention_phrases={k: tuple(v) for k, v in doc["findings"].items()},
        negation_cues=tuple(doc["negation_cues"]),
        uncertainty_cues=tuple(doc["uncertainty_cues"]),
        window_tokens=int(doc.get("window_tokens", 6)),
    )


_FINDINGS_HEADER = re.compile(r"findings\s*:", re.IGNORECASE)
# A subsequent section header: an all-caps run with colon, or a word at the
# start of a line followed by a colon (e.g. "IMPRESSION:" / "Impression:").
_NEXT_HEADER = re.compile(r"(?:[A-Z]{2,}[A-Z ]*:)|(?:(?<=\n)[A-Za-z][A-Za-z ]*:)")
_SENTENCE_BREAK = re.compile(r"[.;\n]")


def segment_findings_section(report_text: str) -> list[tuple[int, int]]:
    """Sentence spans (char offsets into the original text) of the Findings
    section; empty when no Findings header exists."""
    m = _FINDINGS_HEADER.search(report_text)
    if m is None:
        return []
    start = m.end()
    nxt = _NEXT_HEADER.search(report_text, start)
    end = nxt.start() if nxt else len(report_text)
    spans: list[tuple[int, int]] = []
    cursor = start
    for brk in _SENTENCE_BREAK.finditer(report_text, start, end):
        spans.append((cursor, brk.start()))
        cursor = brk.end()
    spans.append((cursor, end))
    trimmed = []
    for s, e in spans:
        seg = report_text[s:e]
        lead = len(seg) - len(seg.lstrip())
        trail = len(seg) - len(seg.rstrip())
        if seg.strip():
            trimmed.append((s + lead, e - trail))
    return trimmed


@dataclass(frozen=True)
class StudyLabels:
    study_id: str
    labels: Mapping[Finding, TriStateLabel]
    provenance: Mapping[Finding, tuple[int, int]] = field(default_factory=dict)


_WORD = re.compile(r"[a-z0-9]+(?:[-'][a-z0-9]+)*")


def _tokenize(text: str) -> list[tuple[int, int, str]]:
    return [(m.start(), m.end(), m.group()) for m in _WORD.finditer(text.lower())]


def _phrase_regex(phrase: str) -> re.Pattern:
    words = [re.escape(w) for w in _WORD.findall(phrase.lower())]
    return re.compile(r"\b" + r"[\s\-]+".join(words) + r"\b", re.IGNORECASE)


def _cue_token_spans(
    tokens: list[tuple[int, int, str]], text: str, cues: Iterable[re.Pattern]
) -> list[tuple[int, int]]:
    """Token-index ranges [first, last] covered by any cue match."""
    spans = []
    for cue in cues:
        for m in cue.finditer(text):
            idxs = [
                i for i, (s, e, _) in enumerate(tokens) if s < m.end() and e > m.start()
            ]
            if idxs:
                spans.append((min(idxs), max(idxs)))
    return spans


_STRENGTH = {
    TriStateLabel.POSITIVE: 2,
    TriStateLabel.UNCERTAIN: 1,
    TriStateLabel.NEGATIVE: 0,
}


class ReportLabeler:
    """Compiled rule set applied to report text; immutable after load."""

    def __init__(self, rules: PatternRuleSet, taxonomy: Taxonomy):
        rules.validate(taxonomy)
        self.rules = rules
        self.taxonomy = taxonomy
        self._mention_res = {
            fid: [_phrase_regex(p) for p in phrases]
            for fid, phrases in rules.mention_phrases.items()
        }
        self._negation_res = [_phrase_regex(c) for c in rules.negation_cues]
        self._uncertainty_res = [_phrase_regex(c) for c in rules.uncertainty_cues]

    def _classify_mention(
        self,
        tokens: list[tuple[int, int, str]],
        sentence: str,
        mention: re.Match,
    ) -> TriStateLabel:
        idxs = [
            i
            for i, (s, e, _) in enumerate(tokens)
            if s < mention.end() and e > mention.start()
        ]
        first, last = min(idxs), max(idxs)
        w = self.rules.window_tokens
        lo, hi = first - w, last + w

        def in_window(span: tuple[int, int]) -> bool:
            cs, ce = span
            if cs >= first and ce <= last:
                return False  # cue inside the mention itself
            return cs <= hi and ce >= lo

        if any(in_window(s) for s in _cue_token_spans(tokens, sentence, self._uncertainty_res)):
            return TriStateLabel.UNCERTAIN
        if any(in_window(s) for s in _cue_token_spans(tokens, sentence, self._negation_res)):
            return TriStateLabel.NEGATIVE
        return TriStateLabel.POSITIVE

    def label_report(self, report_text: str, study_id: str = "") -> StudyLabels:
        spans = segment_findings_section(report_text)
        labels: dict[Finding, TriStateLabel] = {}
        provenance: dict[Finding, tuple[int, int]] = {}
        for start, end in spans:
            sentence = report_text[start:end]
            tokens = _tokenize(sentence)
            for finding in self.taxonomy:
                for mention_re in self._mention_res[finding.id]:
                    for m in mention_re.finditer(sentence):
                        state = self._classify_mention(tokens, sentence, m)
                        prev = labels.get(finding)
                        if prev is None or _STRENGTH[state] > _STRENGTH[prev]:
                            labels[finding] = state
                            provenance[finding] = (start, end)
        return StudyLabels(study_id=study_id, labels=labels, provenance=provenance)


def propagate_to_images(
    study: Study,
    study_labels: StudyLabels,
    images: Mapping[str, ImageRecord],
) -> dict[str, dict[Finding, TriStateLabel]]:
    """Copy study labels to each image, then mask by the image's body part."""
    out: dict[str, dict[Finding, TriStateLabel]] = {}
    for image_id in study.image_ids:
        image = images[image_id]
        out[image_id] = mask_labels(image, study_labels.labels)
    return out
