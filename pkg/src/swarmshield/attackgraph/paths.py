"""Attack-path tracing over the provenance graph and the verifier agents.

The engine's provenance turns every derivation of ``hasPriv(A, N2, P2)`` that
consumes a ``hasPriv(A, N1, P1)`` premise and a ``vuln(V, ...)`` fact into an
exploit step ``(N1, P1, V, N2, P2)``. Derivations without a ``hasPriv``
premise mark root states (the attacker's footholds).
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .datalog import AtomicFact, Database, FixpointResult, HornRule, _match, fixpoint, is_var, join

PRIV_PRED = "hasPriv"
VULN_PRED = "vuln"
ASSET_PRED = "asset"

Step = tuple  # (src_node, priv_before, vuln_id, dst_node, priv_after)


@dataclass(frozen=True, order=True)
class AttackPath:
    steps: tuple
    rules: tuple = field(default=(), compare=False)

    def __post_init__(self):
        for a, b in zip(self.steps, self.steps[1:]):
            if (a[3], a[4]) != (b[0], b[1]):
                raise ValueError(f"steps do not chain: {a} -> {b}")
        states = [(s[0], s[1]) for s in self.steps[:1]] + [(s[3], s[4]) for s in self.steps]
        if len(set(states)) != len(states):
            raise ValueError("path revisits a (node, privilege) state")

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def canonical(self) -> str:
        return " -> ".join(f"{s[0]}:{s[1]} [{s[2]}] {s[3]}:{s[4]}" for s in self.steps)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical.encode()).hexdigest()[:16]

    @property
    def vulns(self) -> set[str]:
        return {s[2] for s in self.steps}


def _rule_roles(rule: HornRule):
    """Return ``(premise_index, vuln_index)`` for step rules, else ``None``."""
    if rule.head.pred != PRIV_PRED:
        return None
    prem = [i for i, a in enumerate(rule.body) if a.pred == PRIV_PRED]
    vul = [i for i, a in enumerate(rule.body) if a.pred == VULN_PRED]
    if len(prem) == 1 and len(vul) == 1:
        return prem[0], vul[0]
    return None


@dataclass
class StepGraph:
    roots: list
    out: dict
    assets: set

    def successors(self, state):
        return self.out.get(state, ())


def build_step_graph(result: FixpointResult, rules: list[HornRule], assets=None) -> StepGraph:
    roles = {r.id: _rule_roles(r) for r in rules}
    roots, out = set(), {}
    for head, derivs in result.provenance.items():
        if head.functor != PRIV_PRED:
            continue
        dst = (head.args[1], head.args[2])
        for d in derivs:
            role = roles.get(d.rule)
            if role is None:
                if not any(f.functor == PRIV_PRED for f in d.body):
                    roots.add(dst)
                continue
            prem, vul = d.body[role[0]], d.body[role[1]]
            step = (prem.args[1], prem.args[2], vul.args[0], dst[0], dst[1])
            out.setdefault((step[0], step[1]), {}).setdefault(step, []).append(d.rule)
    if assets is None:
        assets = {f.args[0] for f in result.facts if f.functor == ASSET_PRED}
    edges = {s: sorted((st, tuple(sorted(set(rs)))) for st, rs in m.items()) for s, m in out.items()}
    return StepGraph(sorted(roots), edges, set(map(str, assets)))


def _dfs(graph: StepGraph, start, depth_cap: int, on_path: set, prefix: tuple, rules: tuple,
         emit, banned_first=None, stats=None) -> None:
    if len(prefix) >= depth_cap:
        return
    for step, rids in graph.successors(start):
        if stats is not None:
            stats["expansions"] = stats.get("expansions", 0) + 1
        if banned_first is not None and step == banned_first:
            continue
        nxt = (step[3], step[4])
        if nxt in on_path:
            continue
        path = prefix + (step,)
        rp = rules + (rids[0],)
        if step[3] in graph.assets:
            emit(AttackPath(path, rp))
        on_path.add(nxt)
        _dfs(graph, nxt, depth_cap, on_path, path, rp, emit, None, stats)
        on_path.discard(nxt)


def trace_paths_pr(result: FixpointResult, rules: list[HornRule], *, entries=None, assets=None,
                   depth_cap: int = 8, stats: dict | None = None) -> list[AttackPath]:
    """Every simple path of at most ``depth_cap`` steps from a foothold state to
    an asset, in lexicographic step order."""
    graph = build_step_graph(result, rules, assets)
    roots = graph.roots
    if entries is not None:
        allowed = set(map(str, entries))
        roots = [r for r in roots if r[0] in allowed]
    found: dict[tuple, AttackPath] = {}
    for root in roots:
        _dfs(graph, root, depth_cap, {root}, (), (), lambda p: found.setdefault(p.steps, p), stats=stats)
    return [found[k] for k in sorted(found)]


# --- verification ---------------------------------------------------------


class Verdict(enum.Enum):
    VALID = "valid"
    INVALID = "invalid"


class StepJustifier:
    """Re-derives exploit steps directly against the base facts."""

    def __init__(self, facts, rules: list[HornRule]):
        self.db = Database(facts)
        self.rules = rules
        self.step_rules = [(r, _rule_roles(r)) for r in rules if _rule_roles(r) is not None]
        self.root_rules = [r for r in rules if r.head.pred == PRIV_PRED and all(a.pred != PRIV_PRED for a in r.body)]
        self.assets = {row[0] for row in self.db.rel(ASSET_PRED).rows}
        self._memo: dict = {}

    def is_root(self, node: str, priv: str) -> bool:
        for r in self.root_rules:
            b = _match(r.head, (r.head.args[0] if not is_var(r.head.args[0]) else "attacker", node, priv), {})
            if b is not None and next(join(self.db, r.body, b), None) is not None:
                return True
        return False

    def step_ok(self, step: Step) -> bool:
        if step not in self._memo:
            self._memo[step] = self._step_ok(step)
        return self._memo[step]

    def _step_ok(self, step: Step) -> bool:
        n1, p1, vid, n2, p2 = step
        for rule, (pi, vi) in self.step_rules:
            prem = rule.body[pi]
            b = _match(rule.head, (_attacker(rule.head), n2, p2), {})
            if b is None:
                continue
            b = _match(prem, (b.get(prem.args[0], _attacker(prem)), n1, p1), b)
            if b is None:
                continue
            vul = rule.body[vi]
            if is_var(vul.args[0]):
                if b.get(vul.args[0], vid) != vid:
                    continue
                b = {**b, vul.args[0]: vid}
            elif vul.args[0] != vid:
                continue
            rest = [a for i, a in enumerate(rule.body) if i != pi]
            if next(join(self.db, rest, b), None) is not None:
                return True
        return False

    def check(self, path: AttackPath) -> bool:
        if not path.steps:
            return False
        first = path.steps[0]
        if not self.is_root(first[0], first[1]):
            return False
        if path.steps[-1][3] not in self.assets:
            return False
        return all(self.step_ok(s) for s in path.steps)


def _attacker(atom) -> str:
    a = atom.args[0]
    return "attacker" if is_var(a) else a


class DeterministicBackend:
    """Verifier instance that always re-derives the path faithfully."""

    def __init__(self, facts, rules):
        self.justifier = StepJustifier(facts, rules)

    def verdict(self, path: AttackPath, rng=None) -> bool:
        return self.justifier.check(path)

    def step_verdict(self, step: Step, rng=None) -> bool:
        return self.justifier.step_ok(step)


class NoisyBackend:
    """Wraps a backend and flips each instance verdict with probability ``q``.

    Stands in for a fallible reasoning agent when exercising the vote.
    """

    def __init__(self, base, q: float):
        if not 0.0 <= q <= 1.0:
            raise ValueError("q must lie in [0, 1]")
        self.base, self.q = base, q

    def verdict(self, path: AttackPath, rng=None) -> bool:
        return self._flip(self.base.verdict(path, rng), rng)

    def step_verdict(self, step: Step, rng=None) -> bool:
        return self._flip(self.base.step_verdict(step, rng), rng)

    def _flip(self, v: bool, rng) -> bool:
        if rng is None:
            raise ValueError("a noisy backend needs an rng")
        return (not v) if rng.uniform() < self.q else v


def rv_votes(path: AttackPath, backend, v_instances: int = 3, rng=None) -> list[bool]:
    if v_instances < 1 or v_instances % 2 == 0:
        raise ConfigError("v_instances must be a positive odd number")
    return [backend.verdict(path, rng) for _ in range(v_instances)]


def verify_path_rv(path: AttackPath, facts=None, rules=None, v_instances: int = 3, quorum: int | None = None,
                   *, backend=None, rng: np.random.Generator | None = None) -> Verdict:
    """Majority vote over ``v_instances`` independent verifier instances."""
    if backend is None:
        backend = DeterministicBackend(facts, rules)
    votes = rv_votes(path, backend, v_instances, rng)
    quorum = v_instances // 2 + 1 if quorum is None else quorum
    return Verdict.VALID if sum(votes) >= quorum else Verdict.INVALID


def verify_steps_rv(steps, backend, v_instances: int = 3, rng=None) -> dict:
    """Majority vote per exploit step; returns ``{step: accepted}``.

    Paths share most of their steps, so voting on distinct steps costs far
    fewer instances than voting on every path.
    """
    if v_instances < 1 or v_instances % 2 == 0:
        raise ConfigError("v_instances must be a positive odd number")
    quorum = v_instances // 2 + 1
    return {st: sum(backend.step_verdict(st, rng) for _ in range(v_instances)) >= quorum for st in steps}


# --- deduplication and prefix exploration ----------------------------------


def dedup_pd(paths) -> list[AttackPath]:
    """Collapse paths with identical canonical step tuples (rule ids ignored)."""
    seen: dict[tuple, AttackPath] = {}
    for p in paths:
        seen.setdefault(p.steps, p)
    return [seen[k] for k in sorted(seen)]


def explore_spe(paths, result: FixpointResult, rules: list[HornRule], *, depth_cap: int = 8,
                backend=None, v_instances: int = 1, rng=None, stats: dict | None = None) -> list[AttackPath]:
    """Grow a path set by prefix decomposition.

    For every known path and every prefix of it (including the empty prefix
    and the whole path) search continuations whose first step differs from
    the path's own next step. Roots without any known path are searched from
    the empty prefix. Candidates are verified and deduplicated before they
    join the set.
    """
    graph = build_step_graph(result, rules)
    if backend is None:
        backend = DeterministicBackend(result.base or result.facts, rules)
    known = {p.steps: p for p in paths}
    fresh: dict[tuple, AttackPath] = {}

    def emit(p):
        if p.steps not in known:
            fresh.setdefault(p.steps, p)

    seeded_roots = set()
    for p in sorted(known.values()):
        steps = p.steps
        seeded_roots.add((steps[0][0], steps[0][1]))
        for i in range(len(steps) + 1):
            prefix = steps[:i]
            state = (steps[0][0], steps[0][1]) if i == 0 else (steps[i - 1][3], steps[i - 1][4])
            on_path = {(steps[0][0], steps[0][1])} | {(s[3], s[4]) for s in prefix}
            if 0 < i < len(steps) and steps[i - 1][3] in graph.assets:
                emit(AttackPath(prefix, p.rules[:i]))
            banned = steps[i] if i < len(steps) else None
            _dfs(graph, state, depth_cap, on_path, prefix, p.rules[:i], emit, banned, stats)
    for root in graph.roots:
        if root not in seeded_roots:
            _dfs(graph, root, depth_cap, {root}, (), (), emit, None, stats)
    accepted = [p for p in fresh.values()
                if verify_path_rv(p, v_instances=v_instances, backend=backend, rng=rng) is Verdict.VALID]
    if stats is not None:
        stats["verified"] = stats.get("verified", 0) + len(fresh)
    return dedup_pd(list(known.values()) + accepted)


def enumerate_paths(facts, rules: list[HornRule], *, depth_cap: int = 8) -> list[AttackPath]:
    """PR then PD then SPE on a fresh fixpoint: the full proactive pipeline."""
    res = fixpoint(facts, rules)
    pr = dedup_pd(trace_paths_pr(res, rules, depth_cap=depth_cap))
    return explore_spe(pr, res, rules, depth_cap=depth_cap)
