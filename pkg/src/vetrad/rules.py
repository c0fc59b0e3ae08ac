"""Forward-chaining production-rule engine for contextualizing study results.

Working memory holds ground facts (study metadata, per-finding scores, derived
flags).  Rules fire by a match-resolve-act loop: highest salience first, rule
id as tie-break, each rule at most once (refraction), until fixpoint or the
iteration cap.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import yaml

MAX_ITERATIONS = 1000

_OPS = {
    ">=": operator.ge,
    ">": operator.gt,
    "<=": operator.le,
    "<": operator.lt,
    "==": operator.eq,
    "!=": operator.ne,
}


class RuleError(ValueError):
    pass


class NonTerminationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Condition:
    """One predicate over working memory.

    kind: score_cmp (finding/op/value), metadata_eq, metadata_ne,
    fact_present, fact_absent.
    """

    kind: str
    finding: str = ""
    op: str = ">="
    value: float = 0.0
    key: str = ""
    expected: str = ""
    name: str = ""

    def holds(self, facts: "FactBase") -> bool:
        if self.kind == "score_cmp":
            score = facts.scores.get(self.finding)
            return score is not None and _OPS[self.op](score, self.value)
        if self.kind == "metadata_eq":
            return facts.metadata.get(self.key) == self.expected
        if self.kind == "metadata_ne":
            return facts.metadata.get(self.key) != self.expected
        if self.kind == "fact_present":
            return self.name in facts.derived
        if self.kind == "fact_absent":
            return self.name not in facts.derived
        raise RuleError(f"unknown condition kind {self.kind}")


@dataclass(frozen=True)
class Action:
    """assert_fact(name) | add_note(text) | suppress_finding(finding)."""

    kind: str
    name: str = ""
    text: str = ""
    finding: str = ""


@dataclass(frozen=True)
class Rule:
    id: str
    salience: int
    conditions: tuple[Condition, ...]
    actions: tuple[Action, ...]

    def __post_init__(self) -> None:
        asserted = {a.name for a in self.actions if a.kind == "assert_fact"}
        absent_checks = {c.name for c in self.conditions if c.kind == "fact_absent"}
        # a rule may guard itself with fact_absent, but other static cycles
        # are caught by the engine's iteration cap
        del asserted, absent_checks


@dataclass
class FactBase:
    metadata: Mapping[str, str] = field(default_factory=dict)
    scores: Mapping[str, float] = field(default_factory=dict)
    derived: set[str] = field(default_factory=set)
    notes: list[str] = field(default_factory=list)
    suppressed: set[str] = field(default_factory=set)

    def copy(self) -> "FactBase":
        return FactBase(
            metadata=dict(self.metadata),
            scores=dict(self.scores),
            derived=set(self.derived),
            notes=list(self.notes),
            suppressed=set(self.suppressed),
        )


def run_rules(
    facts: FactBase,
    rules: Sequence[Rule],
    max_iterations: int = MAX_ITERATIONS,
) -> tuple[FactBase, list[str], list[str]]:
    """Match-resolve-act to fixpoint; returns (facts, fired-rule trace, notes)."""
    wm = facts.copy()
    fired: set[str] = set()
    trace: list[str] = []
    for _ in range(max_iterations):
        enabled = [
            r
            for r in rules
            if r.id not in fired and all(c.holds(wm) for c in r.conditions)
        ]
        if not enabled:
            return wm, trace, wm.notes
        rule = min(enabled, key=lambda r: (-r.salience, r.id))
        for action in rule.actions:
            if action.kind == "assert_fact":
                wm.derived.add(action.name)
            elif action.kind == "add_note":
                wm.notes.append(action.text)
            elif action.kind == "suppress_finding":
                wm.suppressed.add(action.finding)
            else:
                raise RuleError(f"unknown action kind {action.kind}")
        fired.add(rule.id)
        trace.append(rule.id)
    raise NonTerminationError(
        f"rule engine hit the {max_iterations}-iteration cap; trace: {trace}"
    )


def _parse_condition(doc: dict, rule_id: str, pos: int) -> Condition:
    try:
        kind = doc["kind"]
        if kind == "score_cmp":
            if doc.get("op", ">=") not in _OPS:
                raise RuleError(f"bad operator {doc.get('op')}")
            return Condition(
                kind=kind, finding=doc["finding"], op=doc.get("op", ">="),
                value=float(doc["value"]),
            )
        if kind in ("metadata_eq", "metadata_ne"):
            return Condition(kind=kind, key=doc["key"], expected=str(doc["value"]))
        if kind in ("fact_present", "fact_absent"):
            return Condition(kind=kind, name=doc["name"])
        raise RuleError(f"unknown condition kind {kind}")
    except (KeyError, TypeError, ValueError) as exc:
        raise RuleError(
            f"rule {rule_id}: bad condition #{pos}: {exc}"
        ) from exc


def _parse_action(doc: dict, rule_id: str, pos: int) -> Action:
    try:
        kind = doc["kind"]
        if kind == "assert_fact":
            return Action(kind=kind, name=doc["name"])
        if kind == "add_note":
            return Action(kind=kind, text=doc["text"])
        if kind == "suppress_finding":
            return Action(kind=kind, finding=doc["finding"])
        raise RuleError(f"unknown action kind {kind}")
    except (KeyError, TypeError) as exc:
        raise RuleError(f"rule {rule_id}: bad action #{pos}: {exc}") from exc


def parse_rules(doc: dict) -> list[Rule]:
    rules: list[Rule] = []
    seen: set[str] = set()
    for entry in doc.get("rules", []):
        rid = str(entry.get("id", ""))
        if not rid:
            raise RuleError("rule missing id")
        if rid in seen:
            raise RuleError(f"duplicate rule id {rid}")
        seen.add(rid)
        conditions = tuple(
            _parse_condition(c, rid, i) for i, c in enumerate(entry.get("conditions", []))
        )
        actions = tuple(
            _parse_action(a, rid, i) for i, a in enumerate(entry.get("actions", []))
        )
        for a in actions:
            if a.kind == "suppress_finding" and any(
                b.kind == "assert_fact" and b.name == a.finding for b in actions
            ):
                raise RuleError(f"rule {rid} both asserts and suppresses {a.finding}")
        rules.append(Rule(id=rid, salience=int(entry.get("salience", 0)),
                          conditions=conditions, actions=actions))
    return rules


def load_rules(path: Optional[str] = None) -> tuple[list[Rule], str]:
    """Load contextualization rules from YAML; returns (rules, version)."""
    if path is None:
        from importlib import resources

        text = resources.files("vetrad.data").joinpath("context_rules.yaml").read_text()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark else ""
        raise RuleError(f"cannot parse rule file{where}: {exc}") from exc
    return parse_rules(doc or {}), str((doc or {}).get("version", "0"))
