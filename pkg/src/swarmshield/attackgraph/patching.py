"""Patch prioritization by path frequency and distance to critical assets."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .datalog import AtomicFact
from .facts import FactBase


@dataclass
class PatchPlan:
    items: list = field(default_factory=list)  # (vuln id, score), best first
    budget: int = 2

    def __post_init__(self):
        scores = [s for _, s in self.items]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("plan scores must be non-increasing")

    @property
    def vulns(self) -> list[str]:
        return [v for v, _ in self.items]


def _facts(facts):
    return facts.facts if isinstance(facts, FactBase) else facts


def asset_hops(facts) -> dict[str, int]:
    """BFS hop count from every node to its nearest asset over ``link`` facts."""
    adj: dict[str, list[str]] = {}
    assets = []
    for f in _facts(facts):
        if f.functor == "link":
            a, b = f.args
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        elif f.functor == "asset":
            assets.append(f.args[0])
    dist = {a: 0 for a in assets}
    queue = deque(sorted(assets))
    while queue:
        u = queue.popleft()
        for v in adj.get(u, ()):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def score_vulns(paths, facts, rho: float = 0.5) -> dict[str, float]:
    total = sum(len(p.steps) for p in paths)
    if total == 0:
        return {}
    hops = asset_hops(facts)
    freq: dict[str, int] = {}
    near: dict[str, int] = {}
    for p in paths:
        for s in p.steps:
            v = s[2]
            freq[v] = freq.get(v, 0) + 1
            h = hops.get(s[3])
            if h is not None:
                near[v] = min(near.get(v, h), h)
    out = {}
    for v, c in freq.items():
        prox = rho / (1.0 + near[v]) if v in near else 0.0
        out[v] = c / total + prox
    return out


def prioritize_patches(paths, facts, budget: int = 2, rho: float = 0.5) -> PatchPlan:
    """Rank vulns by ``freq/total_steps + rho/(1 + hops to nearest asset)``.

    Ties go to the smaller vuln id; the plan keeps the top ``budget``.
    """
    scores = score_vulns(paths, facts, rho)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return PatchPlan(ranked[: max(budget, 0)], budget)


def apply_patches(facts: FactBase, vids) -> FactBase:
    """Drop the vuln facts for ``vids``; paths through them stop deriving."""
    vids = set(vids)
    drop = [f for f in facts.facts if f.functor == "vuln" and f.args[0] in vids]
    return facts.without(drop)


def paths_using(paths, vids) -> list:
    vids = set(vids)
    return [p for p in paths if p.vulns & vids]


def vuln_fact_ids(facts) -> set[str]:
    return {f.args[0] for f in _facts(facts) if isinstance(f, AtomicFact) and f.functor == "vuln"}
