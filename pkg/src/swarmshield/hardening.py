"""Multi-hop penetration world and the per-round hardening strategies.

During the penetration window the world emits raw snapshots; each strategy
turns a compiled snapshot into patches and books the overhead it spent.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .attackgraph.datalog import Engine
from .attackgraph.facts import FactBase, compile_facts, prune_links
from .attackgraph.patching import prioritize_patches
from .attackgraph.paths import DeterministicBackend, dedup_pd, explore_spe, trace_paths_pr, verify_steps_rv
from .baselines import HardeningKind, fls_harden, gp_harden, sas_harden
from .config import AttackGraphConfig, ScenarioConfig
from .errors import CompilationRejected
from .swarm import SwarmTopology
from .threats import PenetrationScenario, VulnRecord, assign_services, default_vuln_catalog, emit_network_snapshot

log = logging.getLogger(__name__)


def _bfs_hops(adj: np.ndarray, sources) -> np.ndarray:
    n = adj.shape[0]
    dist = np.full(n, np.iinfo(np.int64).max)
    q = deque()
    for s in sources:
        dist[s] = 0
        q.append(s)
    nbrs = [np.flatnonzero(adj[i]) for i in range(n)]
    while q:
        u = q.popleft()
        for v in nbrs[u]:
            if dist[v] > dist[u] + 1:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def _exploitable(services, usable: list[VulnRecord], pre: str = "user") -> set[int]:
    keys = {(v.service, v.version) for v in usable if v.pre_priv == pre}
    return {n for n, svc in services.items() if any(s in keys for s in svc)}


@dataclass
class PenetrationWorld:
    scenario: PenetrationScenario
    present: list[VulnRecord]
    disclosure_slot: dict[str, int]
    start_slot: int
    end_slot: int
    snapshot_every: int
    hop_every: int
    footholds: set = field(default_factory=set)
    patched: set = field(default_factory=set)

    def active(self, slot: int) -> bool:
        return self.start_slot <= slot < self.end_slot

    def is_snapshot_slot(self, slot: int) -> bool:
        if not self.active(slot):
            return False
        k = slot - self.start_slot
        return k % self.snapshot_every == 0 or k % self.hop_every == 0 or slot in self._disclosure_slots

    def is_hop_slot(self, slot: int) -> bool:
        return self.active(slot) and slot > self.start_slot and (slot - self.start_slot) % self.hop_every == 0

    def __post_init__(self):
        self._disclosure_slots = set(self.disclosure_slot.values())

    def disclosed(self, slot: int) -> list[VulnRecord]:
        return [v for v in self.present if self.disclosure_slot[v.vid] <= slot and v.vid not in self.patched]

    def usable(self) -> list[VulnRecord]:
        return [v for v in self.present if v.vid not in self.patched]

    def advance_attacker(self, topology: SwarmTopology) -> int | None:
        """Take one more foothold: the exploitable neighbour closest to an asset."""
        targets = _exploitable(self.scenario.services, self.usable()) - self.footholds
        if not targets:
            return None
        adj = topology.sense
        fh = np.array(sorted(self.footholds), dtype=int)
        frontier = [t for t in sorted(targets) if adj[t, fh].any()]
        if not frontier:
            return None
        hops = _bfs_hops(adj, self.scenario.critical_assets)
        best = min(frontier, key=lambda t: (hops[t], t))
        self.footholds.add(best)
        return best

    def snapshot(self, slot: int, topology: SwarmTopology, insiders, cfg: ScenarioConfig,
                 rng: np.random.Generator) -> FactBase | None:
        th = cfg.threat
        cfg_text, vul_text = emit_network_snapshot(
            self.scenario, topology, disclosed=self.disclosed(slot), footholds=self.footholds,
            insiders=insiders, leak_probability=th.leak_probability, duplicate_prob=th.duplicate_scan_prob, rng=rng)
        try:
            return prune_links(compile_facts(cfg_text, vul_text))
        except CompilationRejected as exc:
            log.warning("slot %d: snapshot rejected (%d malformed records)", slot, len(exc.report))
            return None


def build_penetration(cfg: ScenarioConfig, topology: SwarmTopology, insiders, rng: np.random.Generator) -> PenetrationWorld:
    """Services, footholds, assets and the disclosure schedule, all seeded."""
    th, sw = cfg.threat, cfg.swarm
    n = topology.sense.shape[0]
    services = assign_services(n, th.outdated_prob, rng)
    running = {s for svc in services.values() for s in svc}
    present = [v for v in default_vuln_catalog() if (v.service, v.version) in running]
    adj = topology.sense

    exploitable = _exploitable(services, present)
    ins = [int(i) for i in sorted(insiders)]
    near = [i for i in ins if i not in exploitable and any(adj[i, j] for j in exploitable)]

    def reach_from(sources) -> set[int]:
        seen, frontier = set(sources), list(sources)
        while frontier:
            u = frontier.pop()
            for v in np.flatnonzero(adj[u]):
                v = int(v)
                if v in exploitable and v not in seen:
                    seen.add(v)
                    frontier.append(v)
        return seen - set(sources)

    # a rational attacker compromises the insiders that open the most ground
    if len(near) >= th.n_entry:
        jitter = rng.permutation(len(near))
        ranked = sorted(range(len(near)), key=lambda k: (-len(reach_from([near[k]])), jitter[k]))
        entries = sorted(near[k] for k in ranked[: th.n_entry])
    else:
        pool = ins or list(range(n))
        entries = sorted(int(x) for x in rng.choice(pool, size=min(th.n_entry, len(pool)), replace=False))

    # the defender's critical assets are ordinary nodes the attacker can reach
    reach = reach_from(entries)
    cand = sorted(reach) or sorted(exploitable - set(entries))
    assets = sorted(int(x) for x in rng.choice(cand, size=min(th.n_assets, len(cand)), replace=False)) if cand else []

    start = int(round(th.pen_start / sw.dt))
    end = int(round(th.pen_end / sw.dt))
    order = rng.permutation(len(present))
    n_first = math.ceil(th.initial_disclosure * len(present))
    later = rng.integers(start + 1, end, size=len(present))
    disclosure = {}
    for rank, idx in enumerate(order):
        disclosure[present[idx].vid] = start if rank < n_first else int(later[rank])

    scenario = PenetrationScenario(th.pen_start, th.pen_end, entries, present, assets, services)
    return PenetrationWorld(scenario, present, disclosure, start, end,
                            max(1, int(round(th.snapshot_period / sw.dt))),
                            max(1, int(round(th.hop_period / sw.dt))), footholds=set(entries))


# --- strategies --------------------------------------------------------------


class HardeningStrategy:
    kind: HardeningKind

    def __init__(self, cfg: AttackGraphConfig, rules, rng: np.random.Generator | None = None):
        self.cfg, self.rules, self.rng = cfg, rules, rng
        self._due: dict[int, float] = {}
        self.rounds = 0

    def book(self, slot: int, amount: float, spread: int = 1) -> None:
        if amount <= 0:
            return
        for k in range(spread):
            self._due[slot + k] = self._due.get(slot + k, 0.0) + amount / spread

    def charge(self, slot: int) -> float:
        return self._due.pop(slot, 0.0)

    def _patches(self, paths, facts: FactBase) -> list[str]:
        return prioritize_patches(paths, facts, self.cfg.patch_budget, self.cfg.proximity_weight).vulns

    def on_snapshot(self, slot: int, facts: FactBase) -> list[str]:
        raise NotImplementedError


class ProposedHardening(HardeningStrategy):
    """Incremental fixpoint, provenance tracing, voted verification, staged rollout."""

    kind = HardeningKind.PROPOSED

    def __init__(self, cfg, rules, rng=None):
        super().__init__(cfg, rules, rng)
        self.engine: Engine | None = None
        self.step_ok: dict[tuple, bool] = {}  # voted verdicts, kept while their facts stand

    def _forget(self, gone) -> None:
        # a verdict lapses when its vuln or its target's service record goes;
        # link churn alone does not touch it
        vids = {f.args[0] for f in gone if f.functor == "vuln"}
        nodes = {f.args[0] for f in gone if f.functor == "service"}
        for st in [st for st in self.step_ok if st[2] in vids or st[3] in nodes]:
            del self.step_ok[st]

    def on_snapshot(self, slot, facts):
        cost = 0.0
        if self.engine is None:
            self.engine = Engine(self.rules, facts.facts)
            cost += self.cfg.firing_cost * self.engine.firings
            changed = True
        else:
            old = self.engine.base
            gone, new = old - facts.facts, facts.facts - old
            changed = bool(gone or new)
            spent = self.engine.remove_facts(gone) + self.engine.add_facts(new)
            cost += self.cfg.firing_cost * spent
            self._forget(gone)
        patches: list[str] = []
        if changed:
            self.rounds += 1
            res = self.engine.result()
            paths = dedup_pd(trace_paths_pr(res, self.rules, depth_cap=self.cfg.depth_cap))
            unseen = sorted({st for p in paths for st in p.steps} - self.step_ok.keys())
            if unseen:
                # prefix exploration only around paths carrying new steps
                seeds = [p for p in paths if any(st not in self.step_ok for st in p.steps)]
                grown = explore_spe(seeds, res, self.rules, depth_cap=self.cfg.depth_cap, backend=_NullBackend())
                paths = dedup_pd(paths + grown)
                unseen = sorted({st for p in paths for st in p.steps} - self.step_ok.keys())
                backend = DeterministicBackend(facts.facts, self.rules)
                self.step_ok.update(verify_steps_rv(unseen, backend, self.cfg.v_instances, self.rng))
                # steps voted on in an earlier round are not paid for again
                cost += self.cfg.verify_cost * self.cfg.v_instances * len(unseen)
            valid = [p for p in paths if all(self.step_ok.get(st) for st in p.steps)]
            patches = self._patches(valid, facts)
            cost += self.cfg.patch_cost * len(patches)
        spread = self.cfg.rollout_slots
        if self.cfg.agent_capacity > 0:
            spread = max(spread, math.ceil(cost / self.cfg.agent_capacity))
        self.book(slot, cost, spread)
        return patches


class _NullBackend:
    # exploration candidates are verified by the voted batch afterwards
    def verdict(self, path, rng=None):
        return True


class FlsHardening(HardeningStrategy):
    kind = HardeningKind.FLS

    def on_snapshot(self, slot, facts):
        self.rounds += 1
        res = fls_harden(facts.facts, self.rules, depth_cap=self.cfg.depth_cap,
                         firing_cap=self.cfg.fls_firing_cap, firing_cost=self.cfg.firing_cost,
                         multiplicity=facts.counts or None)
        patches = self._patches(res.paths, facts)
        self.book(slot, res.overhead + self.cfg.patch_cost * len(patches))
        return patches


class SasHardening(HardeningStrategy):
    kind = HardeningKind.SAS

    def on_snapshot(self, slot, facts):
        self.rounds += 1
        res = sas_harden(facts.facts, self.rules, self.cfg.sas_error_prob, self.rng, depth_cap=self.cfg.depth_cap,
                         firing_cost=self.cfg.firing_cost, verify_cost=self.cfg.verify_cost,
                         multiplicity=facts.counts or None)
        patches = self._patches(res.paths, facts)
        self.book(slot, res.overhead + self.cfg.patch_cost * len(patches))
        return patches


class GpHardening(HardeningStrategy):
    kind = HardeningKind.GP

    def __init__(self, cfg, rules, rng=None):
        super().__init__(cfg, rules, rng)
        self.seen: set[str] = set()

    def on_snapshot(self, slot, facts):
        self.rounds += 1
        vids = {f.args[0] for f in facts.facts if f.functor == "vuln"} - self.seen
        self.seen |= vids
        res = gp_harden(vids, self.cfg.patch_cost)
        self.book(slot, res.overhead)
        return res.extra["patches"]


STRATEGIES = {
    HardeningKind.PROPOSED: ProposedHardening,
    HardeningKind.FLS: FlsHardening,
    HardeningKind.SAS: SasHardening,
    HardeningKind.GP: GpHardening,
}


def make_strategy(kind: HardeningKind | str, cfg: AttackGraphConfig, rules, rng=None) -> HardeningStrategy:
    return STRATEGIES[HardeningKind(kind)](cfg, rules, rng)


class PathCensus:
    """Uncharged instrumentation: how many valid attack paths a snapshot leaves open.

    Keeps its own incremental engine so that the count costs little per round.
    """

    def __init__(self, rules, depth_cap: int = 8):
        self.rules, self.depth_cap = rules, depth_cap
        self.engine = Engine(rules)

    def count(self, facts: FactBase) -> int:
        old = self.engine.base
        self.engine.remove_facts(old - facts.facts)
        self.engine.add_facts(facts.facts - old)
        return len(trace_paths_pr(self.engine.result(), self.rules, depth_cap=self.depth_cap))
