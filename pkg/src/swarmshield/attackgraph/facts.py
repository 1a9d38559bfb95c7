"""Compile raw network snapshots into a deduplicated base of atomic facts."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

from ..errors import CompilationRejected
from .datalog import AtomicFact

# keyword -> (fact arity, indices of integer-valued node ids)
GRAMMAR = {
    "node": (1, (0,)),
    "link": (2, (0, 1)),
    "service": (3, (0,)),
    "vuln": (5, ()),
    "asset": (1, (0,)),
    "entry": (1, (0,)),
}
PRIVS = {"none", "user", "root"}
REJECT_FRACTION = 0.10


@dataclass(frozen=True)
class ParseIssue:
    source: str
    line_no: int
    line: str
    reason: str


@dataclass
class FactBase:
    facts: frozenset = frozenset()
    version: int = 0
    issues: list = field(default_factory=list)
    # raw record multiplicities, duplicates included (empty when unknown)
    counts: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.facts)

    def __iter__(self):
        return iter(sorted(self.facts))

    def __contains__(self, f) -> bool:
        return f in self.facts

    def by_functor(self, functor: str) -> list[AtomicFact]:
        return sorted(f for f in self.facts if f.functor == functor)

    def without(self, drop: Iterable[AtomicFact]) -> "FactBase":
        """A new version with ``drop`` removed; the receiver is left untouched."""
        return FactBase(self.facts - frozenset(drop), self.version + 1, list(self.issues))

    def with_facts(self, add: Iterable[AtomicFact]) -> "FactBase":
        return FactBase(self.facts | frozenset(add), self.version + 1, list(self.issues))


@lru_cache(maxsize=1 << 16)
def _parse_line(line: str) -> tuple[AtomicFact | None, str | None]:
    parts = line.split()
    kw, args = parts[0], parts[1:]
    spec = GRAMMAR.get(kw)
    if spec is None:
        return None, f"unknown record type {kw!r}"
    arity, int_pos = spec
    if len(args) != arity:
        return None, f"{kw} expects {arity} field(s), got {len(args)}"
    for i in int_pos:
        if not args[i].lstrip("-").isdigit():
            return None, f"{kw}: node id {args[i]!r} is not an integer"
    if kw == "vuln" and not {args[3], args[4]} <= PRIVS:
        return None, "vuln: privileges must be none, user or root"
    if kw == "link":
        a, b = sorted((int(args[0]), int(args[1])))
        if a == b:
            return None, "link: self loop"
        args = [str(a), str(b)]
    return AtomicFact(kw, tuple(args)), None


def parse_records(raw_config_text: str, raw_vuln_text: str) -> tuple[list[AtomicFact], list[ParseIssue], int]:
    """Parse every record line without deduplicating.

    Returns ``(records, issues, n_records)``; comments and blank lines do not
    count as records.
    """
    records: list[AtomicFact] = []
    issues: list[ParseIssue] = []
    n_records = 0
    for source, text in (("config", raw_config_text), ("vuln", raw_vuln_text)):
        for no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            n_records += 1
            f, err = _parse_line(line)
            if err:
                issues.append(ParseIssue(source, no, raw, err))
            else:
                records.append(f)
    return records, issues, n_records


def compile_facts(raw_config_text: str, raw_vuln_text: str, *, reject_fraction: float = REJECT_FRACTION) -> FactBase:
    """Turn the two raw texts into a set of facts.

    Every non-comment line yields at most one fact; duplicates collapse and
    links are stored once with sorted endpoints. Malformed lines are
    collected with their line numbers. If more than ``reject_fraction`` of
    the records are malformed the whole snapshot is rejected.
    """
    records, issues, n_records = parse_records(raw_config_text, raw_vuln_text)
    if n_records and len(issues) > reject_fraction * n_records:
        raise CompilationRejected(issues)
    return FactBase(frozenset(records), 0, issues, dict(Counter(records)))


def raw_line_count(*texts: str) -> int:
    return sum(1 for t in texts for line in t.splitlines() if line.strip() and not line.strip().startswith("#"))


def prune_links(facts: FactBase) -> FactBase:
    """Drop links with no endpoint running a service version named in a vuln.

    Exploit rules only traverse a link towards a vulnerable endpoint, so for
    rule sets of that shape the pruned base derives exactly the same
    privileges while being far smaller.
    """
    keys = {(f.args[1], f.args[2]) for f in facts.facts if f.functor == "vuln"}
    hot = {f.args[0] for f in facts.facts if f.functor == "service" and (f.args[1], f.args[2]) in keys}
    drop = [f for f in facts.facts if f.functor == "link" and f.args[0] not in hot and f.args[1] not in hot]
    return FactBase(facts.facts - frozenset(drop), facts.version, list(facts.issues), facts.counts) if drop else facts
