"""A small positive Datalog engine with provenance.

Terms are strings; a term starting with an uppercase letter or ``_`` is a
variable. Ground facts are :class:`AtomicFact` tuples. Evaluation is
semi-naive: in round ``r`` each rule is instantiated once per body position
``i`` with the delta relation at ``i``, pre-delta facts before ``i`` and all
facts after ``i``. Every body instantiation is therefore enumerated exactly
once over a whole run, which makes the firing count well defined and lets the
provenance map hold every alternative derivation without duplicates.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from ..errors import RuleError


class AtomicFact(NamedTuple):
    functor: str
    args: tuple

    @property
    def text(self) -> str:
        return f"{self.functor}({','.join(self.args)})"

    def __str__(self) -> str:
        return self.text


def fact(functor: str, *args) -> AtomicFact:
    return AtomicFact(functor, tuple(str(a) for a in args))


def is_var(term: str) -> bool:
    return term[:1].isupper() or term[:1] == "_"


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple

    @property
    def variables(self) -> set[str]:
        return {a for a in self.args if is_var(a)}

    def __str__(self) -> str:
        return f"{self.pred}({', '.join(self.args)})"


@dataclass(frozen=True)
class HornRule:
    id: str
    head: Atom
    body: tuple

    def __post_init__(self):
        if not self.body:
            raise RuleError(f"rule {self.id}: empty body")
        bound = set().union(*(a.variables for a in self.body))
        free = self.head.variables - bound
        if free:
            raise RuleError(f"rule {self.id}: head variable(s) {sorted(free)} not bound in body")

    def __str__(self) -> str:
        return f"{self.head} :- {', '.join(map(str, self.body))}."


_ATOM = re.compile(r"\s*([a-z][A-Za-z0-9_]*)\s*\(([^()]*)\)\s*")


def _parse_atom(text: str, where: str) -> Atom:
    m = _ATOM.fullmatch(text)
    if not m:
        raise RuleError(f"{where}: cannot parse atom {text.strip()!r}")
    args = tuple(a.strip() for a in m.group(2).split(",")) if m.group(2).strip() else ()
    if any(not a or not re.fullmatch(r"[A-Za-z0-9_.\-]+", a) for a in args):
        raise RuleError(f"{where}: bad argument list in {text.strip()!r}")
    return Atom(m.group(1), args)


def _split_atoms(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def parse_rules(text: str) -> list[HornRule]:
    """Parse ``head :- atom, atom.`` rules; ``%`` starts a comment.

    Rules are numbered ``r1, r2, ...`` in file order.
    """
    clean = "\n".join(line.split("%", 1)[0] for line in text.splitlines())
    # a rule ends at ')' followed by '.', so dots inside constants are safe
    chunks = re.split(r"\)\s*\.(?=\s|$)", clean)
    if chunks[-1].strip():
        raise RuleError(f"unterminated rule: {chunks[-1].strip()!r}")
    out = []
    for n, src in enumerate(chunks[:-1], start=1):
        rid = f"r{n}"
        if ":-" not in src:
            raise RuleError(f"rule {rid}: missing ':-'")
        head_s, body_s = src.split(":-", 1)
        head = _parse_atom(head_s, rid)
        body = tuple(_parse_atom(a, rid) for a in _split_atoms(body_s + ")"))
        out.append(HornRule(rid, head, body))
    return out


@dataclass(frozen=True, order=True)
class Derivation:
    rule: str
    body: tuple  # ground body facts in rule order


class _Relation:
    """Set of argument tuples with lazily built hash indexes."""

    __slots__ = ("rows", "indexes")

    def __init__(self):
        self.rows: set[tuple] = set()
        self.indexes: dict[tuple, dict] = {}

    def add(self, row: tuple) -> bool:
        if row in self.rows:
            return False
        self.rows.add(row)
        for pos, idx in self.indexes.items():
            idx.setdefault(tuple(row[p] for p in pos), []).append(row)
        return True

    def discard(self, row: tuple) -> bool:
        if row not in self.rows:
            return False
        self.rows.remove(row)
        for pos, idx in self.indexes.items():
            bucket = idx.get(tuple(row[p] for p in pos))
            if bucket is not None:
                bucket.remove(row)
        return True

    def lookup(self, pos: tuple, key: tuple):
        if not pos:
            return self.rows
        idx = self.indexes.get(pos)
        if idx is None:
            idx = {}
            for row in self.rows:
                idx.setdefault(tuple(row[p] for p in pos), []).append(row)
            self.indexes[pos] = idx
        return idx.get(key, ())


def _match(atom: Atom, row: tuple, binding: dict) -> dict | None:
    if len(row) != len(atom.args):
        return None
    new = None
    for term, val in zip(atom.args, row):
        if is_var(term):
            cur = binding.get(term) if new is None else new.get(term)
            if cur is None:
                if new is None:
                    new = dict(binding)
                new[term] = val
            elif cur != val:
                return None
        elif term != val:
            return None
    return binding if new is None else new


def _ground(atom: Atom, binding: dict) -> AtomicFact:
    return AtomicFact(atom.pred, tuple(binding[a] if is_var(a) else a for a in atom.args))


class Database:
    def __init__(self, facts: Iterable[AtomicFact] = ()):
        self.rels: dict[str, _Relation] = {}
        for f in facts:
            self.add(f)

    def rel(self, pred: str) -> _Relation:
        r = self.rels.get(pred)
        if r is None:
            r = self.rels[pred] = _Relation()
        return r

    def add(self, f: AtomicFact) -> bool:
        return self.rel(f.functor).add(f.args)

    def discard(self, f: AtomicFact) -> bool:
        r = self.rels.get(f.functor)
        return r is not None and r.discard(f.args)

    def __contains__(self, f: AtomicFact) -> bool:
        r = self.rels.get(f.functor)
        return r is not None and f.args in r.rows

    def facts(self) -> set[AtomicFact]:
        return {AtomicFact(p, row) for p, r in self.rels.items() for row in r.rows}

    def candidates(self, atom: Atom, binding: dict):
        pos, key = [], []
        for i, t in enumerate(atom.args):
            if not is_var(t):
                pos.append(i)
                key.append(t)
            elif t in binding:
                pos.append(i)
                key.append(binding[t])
        r = self.rels.get(atom.pred)
        if r is None:
            return ()
        return r.lookup(tuple(pos), tuple(key))


def join(db: Database, atoms, binding: dict | None = None, *, skip=None):
    """Yield ``(binding, rows)`` for every match of ``atoms`` against ``db``.

    ``skip[i]`` optionally names a set of rows excluded at position ``i``.
    """
    atoms = list(atoms)

    def rec(i, b, rows):
        if i == len(atoms):
            yield b, rows
            return
        ex = skip.get(i) if skip else None
        for row in list(db.candidates(atoms[i], b)):
            if ex is not None and row in ex:
                continue
            nb = _match(atoms[i], row, b)
            if nb is not None:
                yield from rec(i + 1, nb, rows + (row,))

    yield from rec(0, binding or {}, ())


@dataclass
class FixpointResult:
    facts: set
    provenance: dict = field(default_factory=dict)
    firings: int = 0
    rounds: int = 0
    base: set = field(default_factory=set)

    @property
    def derived(self) -> set:
        return self.facts - self.base


class Engine:
    """Stateful semi-naive evaluator supporting incremental updates.

    Additions continue semi-naive from the new facts. Deletions never re-join:
    since every derivation over the old facts is on record and the new
    fixpoint only uses a subset of them, the facts that depended on a removed
    fact are re-validated against the surviving derivations.
    """

    def __init__(self, rules: list[HornRule], facts: Iterable[AtomicFact] = ()):
        self.rules = list(rules)
        self.db = Database()
        self.base: set[AtomicFact] = set()
        self.support: dict[AtomicFact, list[Derivation]] = {}
        self._seen: set = set()
        self._users: dict[AtomicFact, set] = {}
        self.firings = 0
        self.rounds = 0
        self.add_facts(facts)

    @property
    def provenance(self) -> dict:
        return {h: ds for h, ds in self.support.items() if h not in self.base}

    def add_facts(self, facts: Iterable[AtomicFact]) -> int:
        """Insert base facts and run semi-naive to the new fixpoint.

        Returns the number of rule firings spent.
        """
        delta: dict[str, set] = {}
        for f in facts:
            self.base.add(f)
            if self.db.add(f):
                delta.setdefault(f.functor, set()).add(f.args)
        before = self.firings
        self._run(delta)
        return self.firings - before

    def remove_facts(self, facts: Iterable[AtomicFact]) -> int:
        """Retract base facts; returns the derivation checks spent."""
        removed = [f for f in facts if f in self.base]
        for f in removed:
            self.base.discard(f)
        candidates: set[AtomicFact] = set()
        stack = list(removed)
        candidates.update(removed)
        while stack:
            f = stack.pop()
            for h in self._users.get(f, ()):
                if h not in candidates and h not in self.base:
                    candidates.add(h)
                    stack.append(h)
        alive = lambda x: x not in candidates or x in revived  # noqa: E731
        revived: set[AtomicFact] = set()
        before = self.firings
        changed = True
        while changed:
            changed = False
            # sorted so the check count does not depend on hash order
            for h in sorted(candidates - revived):
                for d in sorted(self.support.get(h, ())):
                    self.firings += 1
                    if all(alive(b) for b in d.body):
                        revived.add(h)
                        changed = True
                        break
        dead = candidates - revived
        for f in dead:
            self.db.discard(f)
        for f in dead:
            for h in self._users.pop(f, ()):
                kept = []
                for d in self.support.get(h, ()):
                    if any(b in dead for b in d.body):
                        self._seen.discard((h, d))
                    else:
                        kept.append(d)
                if h in self.support:
                    self.support[h] = kept
        for f in dead:
            for d in self.support.pop(f, ()):
                self._seen.discard((f, d))
                for b in d.body:
                    users = self._users.get(b)
                    if users is not None:
                        users.discard(f)
        return self.firings - before

    def _run(self, delta: dict[str, set]) -> None:
        while any(delta.values()):
            self.rounds += 1
            new: dict[str, set] = {}
            for rule in self.rules:
                for i, atom in enumerate(rule.body):
                    d = delta.get(atom.pred)
                    if not d:
                        continue
                    # an empty partner relation cannot join: skip without scanning the delta
                    if any(not self.db.rel(a.pred).rows for j, a in enumerate(rule.body) if j != i):
                        continue
                    self._fire(rule, i, d, delta, new)
            for pred, rows in new.items():
                for row in rows:
                    self.db.add(AtomicFact(pred, row))
            delta = new

    def _fire(self, rule: HornRule, i: int, d: set, delta: dict, new: dict) -> None:
        body = rule.body
        rest = [j for j in range(len(body)) if j != i]
        order = [body[j] for j in rest]
        skip = {k: delta.get(body[j].pred, set()) for k, j in enumerate(rest) if j < i}
        for row in sorted(d):
            b = _match(body[i], row, {})
            if b is None:
                continue
            for binding, rows in join(self.db, order, b, skip=skip):
                self.firings += 1
                head = _ground(rule.head, binding)
                full = list(rows)
                full.insert(i, row)
                deriv = Derivation(rule.id, tuple(AtomicFact(a.pred, r) for a, r in zip(body, full)))
                if (head, deriv) in self._seen:
                    continue
                self._seen.add((head, deriv))
                self.support.setdefault(head, []).append(deriv)
                for bf in deriv.body:
                    self._users.setdefault(bf, set()).add(head)
                if head not in self.db and head.args not in new.get(head.functor, ()):
                    new.setdefault(head.functor, set()).add(head.args)

    def result(self) -> FixpointResult:
        return FixpointResult(self.db.facts(), self.provenance, self.firings, self.rounds, set(self.base))


def fixpoint(facts: Iterable[AtomicFact], rules: list[HornRule]) -> FixpointResult:
    return Engine(rules, facts).result()


def naive_fixpoint(facts: Iterable[AtomicFact], rules: list[HornRule]) -> set[AtomicFact]:
    """Re-derive everything every round until nothing changes (test oracle)."""
    known = set(facts)
    while True:
        db = Database(known)
        derived = set()
        for rule in rules:
            for binding, _ in join(db, rule.body):
                derived.add(_ground(rule.head, binding))
        if derived <= known:
            return known
        known |= derived
