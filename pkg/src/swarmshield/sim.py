"""Discrete-time swarm simulation.

One slot runs five phases in a fixed order:

1. attacks: spoof bias on the victim's GPS, insider position misreports;
2. perception and defense: ranging, residuals, CDI policy, anchor-based
   correction, trust and type updates, hardening round;
3. kinematics: waypoint steering on the corrected navigation estimate;
4. topology rebuild from true positions;
5. metrics row.

Random draws come from three generators derived from the seed. The world
stream is consumed in the order range noise, insider offsets, probe tasks,
waypoints, independent of the policy. Snapshot rendering and agent-internal
randomness (the sequential reasoner's hallucinations) use their own streams so
that every policy sees exactly the same attack trace.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .attackgraph import default_rules
from .baselines import HardeningKind, PolicyKind, cos_policy, gs_policy, lfs_policy
from .config import ScenarioConfig, with_seed
from .errors import DegenerateGeometry, InsufficientAnchors, SimulationFault
from .game.belief import AttackerBelief, ResidualLikelihood, update_belief
from .game.mfg import MfgParams
from .game.mpc import MpcController
from .hardening import PathCensus, build_penetration, make_strategy
from .metrics import MetricsRow
from .perception import fuse_position, reconstruct_position, residual_to_probability, select_anchors
from .swarm import deploy_ppp, pairwise_distances, topology_from_distances
from .threats import SpoofAttack, Stealth, misreport_offsets, select_edge_victim
from .trust import (Access, BehaviorSignal, ExecutionModel, ProbeTask, SwarmTrust, TypeBelief, bayes_update,
                    graded_access, simulate_task_execution)

log = logging.getLogger(__name__)

_ACCESS_CODE = {Access.ADMIT: 0, Access.ESCALATE: 1, Access.REJECT: 2}

# run labels: defense policies run with proposed hardening and vice versa
RUN_LABELS = {
    "proposed": (PolicyKind.PROPOSED, HardeningKind.PROPOSED),
    "cos": (PolicyKind.COS, HardeningKind.PROPOSED),
    "lfs": (PolicyKind.LFS, HardeningKind.PROPOSED),
    "gs": (PolicyKind.GS, HardeningKind.PROPOSED),
    "fls": (PolicyKind.PROPOSED, HardeningKind.FLS),
    "sas": (PolicyKind.PROPOSED, HardeningKind.SAS),
    "gp": (PolicyKind.PROPOSED, HardeningKind.GP),
}


def resolve_label(label: str) -> tuple[PolicyKind, HardeningKind]:
    try:
        return RUN_LABELS[label.lower()]
    except KeyError:
        raise ValueError(f"unknown policy {label!r}; expected one of {', '.join(RUN_LABELS)}") from None


@dataclass
class SlotTrace:
    """Per-slot internals kept for tests and diagnostics (not written to CSV)."""

    k: np.ndarray
    prob: np.ndarray
    cdi: np.ndarray
    nav_err: np.ndarray
    corrected: int


class Simulation:
    def __init__(self, cfg: ScenarioConfig, policy: PolicyKind | str = PolicyKind.PROPOSED,
                 hardening: HardeningKind | str = HardeningKind.PROPOSED, *, seed: int | None = None,
                 label: str | None = None, keep_trace: bool = False):
        if seed is not None:
            cfg = with_seed(cfg, seed)
        cfg.validate()
        self.cfg = cfg
        self.policy = PolicyKind(policy)
        self.hardening = HardeningKind(hardening)
        self.label = label or (self.policy.value if self.hardening is HardeningKind.PROPOSED else self.hardening.value)
        self.seed = cfg.swarm.seed
        self.keep_trace = keep_trace
        self.traces: list[SlotTrace] = []

        sw, th, tr = cfg.swarm, cfg.threat, cfg.trust
        self.rng = np.random.default_rng(self.seed)
        self.snap_rng = np.random.default_rng([self.seed, 1])
        self.agent_rng = np.random.default_rng([self.seed, 2])

        self.uavs = deploy_ppp(cfg, self.rng)
        n = self.n = len(self.uavs)
        self.region = np.asarray(sw.region, dtype=float)
        self.pos = np.array([u.pos_true for u in self.uavs])
        self.insider = np.array([u.is_insider for u in self.uavs])
        self.insider_idx = np.flatnonzero(self.insider)
        self._rebuild_topology()

        self.victim = select_edge_victim(self.topology)
        self.spoof = SpoofAttack(self.victim, th.spoof_start, th.spoof_end, th.drift_rate,
                                 np.asarray(th.drift_dir), Stealth(th.stealth))
        self.world = build_penetration(cfg, self.topology, self.insider_idx.tolist(), self.rng)
        self.rules = default_rules()
        self.strategy = make_strategy(self.hardening, cfg.attack_graph, self.rules, self.agent_rng)

        self.o_hat = np.zeros((n, 3))  # standing GPS correction per UAV
        self.nav = self.pos.copy()
        self.cdi = np.zeros(n)
        self.energy = np.full(n, sw.initial_energy)
        self.waypoints = self.pos.copy()
        self.trust = SwarmTrust(n, lam=tr.lam, eta=tr.eta, window=tr.window, initial=tr.initial_trust)
        self.p_legit = np.full(n, tr.type_prior)
        self.access = np.zeros(n, dtype=int)
        self.exec_model = ExecutionModel(tr.conserve_factor, tr.stop_short, tr.delay_noise, tr.accuracy_noise)

        g = cfg.game
        self.mfg_params = MfgParams(g.gamma, g.sigma, g.c_lat, g.c_en, g.c_risk, g.c_cong)
        pc = cfg.perception
        self.controller = MpcController(g, pc.kappa0, pc.sigma_k, sw.r_sense)
        self.belief: AttackerBelief = self.controller.belief
        self.likelihood = ResidualLikelihood(g.likelihood_floor, g.likelihood_gain, g.likelihood_sigma)
        self.paths_open = 0
        self.census = PathCensus(self.rules, cfg.attack_graph.depth_cap)
        self.slot = 0

    # -- helpers ---------------------------------------------------------

    def _rebuild_topology(self, epoch: int = 0) -> None:
        sw = self.cfg.swarm
        self.dist = pairwise_distances(self.pos)
        self.topology = topology_from_distances(self.dist, sw.r_comm, sw.r_sense, epoch=epoch)
        self.edges = np.nonzero(self.topology.sense)  # row-major, so grouped by observer

    def _cdi(self, s: np.ndarray, k_stat: float) -> np.ndarray:
        sw, b = self.cfg.swarm, self.cfg.baselines
        if self.policy is PolicyKind.PROPOSED:
            dec = self.controller.step(s, k_stat)
            self.belief = dec.belief
            return dec.cdi
        self.belief = update_belief(self.belief, k_stat, self.likelihood)
        if self.policy is PolicyKind.COS:
            return cos_policy(s, sw.r_sense)
        if self.policy is PolicyKind.LFS:
            return lfs_policy(s, b.lfs_gain, sw.r_sense)
        return gs_policy(s, self.mfg_params, r_sense=sw.r_sense, step=b.gs_grid_step, dt=sw.dt)

    def _probes(self, slot: int) -> None:
        tr = self.cfg.trust
        tasked = np.flatnonzero(np.arange(self.n) % tr.task_period == slot % tr.task_period)
        u = self.rng.uniform(size=len(tasked))
        dirs = self.rng.normal(size=(len(tasked), 3))
        deadline = tr.probe_distance / tr.probe_speed
        for idx, i in enumerate(tasked.tolist()):
            d = dirs[idx] / (np.linalg.norm(dirs[idx]) or 1.0)
            task = ProbeTask(self.pos[i] + tr.probe_distance * d, deadline, bool(u[idx] < tr.probe_ratio))
            misbehaving = bool(self.insider[i]) and slot >= self.cfg.threat.camouflage_slots
            sig: BehaviorSignal = simulate_task_execution(self.uavs[i], task, self.rng, start_pos=self.pos[i],
                                                          misbehaving=misbehaving, model=self.exec_model)
            if not task.is_probe:
                continue
            self.energy[i] -= sig.energy
            self.p_legit[i] = bayes_update(TypeBelief(self.p_legit[i]), sig, deadline=deadline).p_legit
            self.access[i] = _ACCESS_CODE[graded_access(self.p_legit[i], tr.theta_hi, tr.theta_lo)]

    # -- one slot --------------------------------------------------------

    def step(self) -> MetricsRow:
        cfg, sw, pc, tr = self.cfg, self.cfg.swarm, self.cfg.perception, self.cfg.trust
        slot = self.slot
        t = slot * sw.dt
        n = self.n

        # (1) attacks
        gps = self.pos.copy()
        gps[self.victim] += self.spoof.bias(t)
        own = gps - self.o_hat
        offsets = misreport_offsets(len(self.insider_idx), cfg.threat.misreport_offset_scale, self.rng)
        report = own.copy()
        if slot >= cfg.threat.camouflage_slots:
            report[self.insider_idx] += offsets

        # (2) perception and defense, on the directed sense-edge list
        ii, jj = self.edges
        up = ii < jj
        z = np.zeros((n, n))
        z[ii[up], jj[up]] = self.rng.normal(0.0, pc.sigma_range, size=int(up.sum()))
        z[jj[up], ii[up]] = z[ii[up], jj[up]]
        ranges = np.maximum(self.dist[ii, jj] + z[ii, jj], 0.0)
        disc = np.abs(np.linalg.norm(own[ii] - report[jj], axis=1) - ranges)
        deg = np.bincount(ii, minlength=n)

        joint = self.trust.joint()
        seen = self.trust.seen()
        proposed = self.policy is PolicyKind.PROPOSED
        if proposed:
            usable = ~seen | ((joint >= tr.residual_floor) & (self.access != _ACCESS_CODE[Access.REJECT]))
            w = usable[jj].astype(float)
        else:
            w = np.ones(len(ii))
        cnt = np.bincount(ii, weights=w, minlength=n)
        k = np.divide(np.bincount(ii, weights=w * disc, minlength=n), cnt, out=np.zeros(n), where=cnt > 0)
        prob = residual_to_probability(k, pc.kappa0, pc.sigma_k)
        s = prob * k
        k_stat = float(k.max()) if n else 0.0
        cdi = np.clip(self._cdi(s, k_stat), 0.0, sw.r_sense)

        nav = own.copy()
        flagged = prob > pc.trigger
        anchor_ok = prob < pc.anchor_cutoff
        if proposed:
            anchor_ok = anchor_ok & (joint >= tr.anchor_floor) & (self.access == _ACCESS_CODE[Access.ADMIT])
        in_reach = ranges <= cdi[ii]
        n_reach = np.bincount(ii, weights=(in_reach & anchor_ok[jj]).astype(float), minlength=n)
        start = np.searchsorted(ii, np.arange(n + 1))
        corrected = 0
        for i in np.flatnonzero(flagged & (n_reach >= 4)).tolist():
            sl = slice(start[i], start[i + 1])
            sel = in_reach[sl]
            cand, r_c = jj[sl][sel], ranges[sl][sel]
            try:
                anchors = select_anchors(i, cand, prob[cand], report[cand], r_c,
                                         trust=joint[cand] if proposed else None,
                                         cutoff=pc.anchor_cutoff, trust_floor=tr.anchor_floor if proposed else -np.inf,
                                         cap=pc.anchor_cap, max_condition=pc.max_condition)
                if proposed and (self.access[anchors.anchors] != _ACCESS_CODE[Access.ADMIT]).any():
                    raise InsufficientAnchors("anchor lost admission")
                recon, _ = reconstruct_position(anchors, pc.max_condition)
            except (InsufficientAnchors, DegenerateGeometry):
                continue
            nav[i] = fuse_position(own[i], recon, float(prob[i]))
            self.o_hat[i] = gps[i] - nav[i]
            corrected += 1
        self.nav = nav
        nav_err = np.linalg.norm(nav - self.pos, axis=1)

        # trust: observers whose own fix agrees with most neighbours rate them
        thresh = tr.betrayal_sigmas * pc.sigma_range
        ok_e = disc <= thresh
        agree = np.bincount(ii, weights=ok_e.astype(float), minlength=n)
        observer = (prob <= pc.trigger) & (deg > 0) & (2 * agree >= deg)
        rated = observer[ii]
        self.trust.update_edges(ii[rated], jj[rated], ok_e[rated])
        self._probes(slot)

        overhead = 0.0
        if self.world.is_snapshot_slot(slot):
            if self.world.is_hop_slot(slot):
                self.world.advance_attacker(self.topology)
            facts = self.world.snapshot(slot, self.topology, self.insider_idx.tolist(), cfg, self.snap_rng)
            if facts is not None:
                patches = self.strategy.on_snapshot(slot, facts)
                self.world.patched.update(patches)
                self.paths_open = self.census.count(facts)
        overhead = self.strategy.charge(slot)

        # (3) kinematics
        wp_every = max(1, int(round(sw.waypoint_period / sw.dt)))
        if slot % wp_every == 0:
            self.waypoints = self.rng.uniform(size=(n, 3)) * self.region
        heading = self.waypoints - nav
        dist_wp = np.linalg.norm(heading, axis=1, keepdims=True)
        speed = np.minimum(sw.max_speed, dist_wp / sw.dt)
        vel = np.divide(heading, dist_wp, out=np.zeros_like(heading), where=dist_wp > 0) * speed
        self.pos = np.clip(self.pos + vel * sw.dt, 0.0, self.region)
        self.energy -= (sw.hover_power + sw.tx_power_coeff * cdi**2) * sw.dt
        self.cdi = cdi

        # (4) topology
        self._rebuild_topology(slot + 1)

        # (5) metrics
        g = cfg.game
        pbar = float(cdi.mean()) if n else 0.0
        cost = g.c_lat * cdi + g.c_en * cdi**2 + g.c_risk * s**2 + g.c_cong * cdi * pbar
        jt = joint[seen] if seen.any() else np.array([tr.initial_trust])
        row = MetricsRow(
            t=round(t, 10),
            mean_cost=float(cost.mean()) if n else 0.0,
            hardening_overhead=float(overhead),
            mean_cdi=pbar,
            victim_deviation=float(nav_err[self.victim]),
            spoof_belief=float(self.belief.attack_mass),
            joint_trust_min=float(jt.min()),
            paths_open=int(self.paths_open),
            policy=self.label,
            seed=int(self.seed),
        ) if _finite(cost, nav_err) else None
        if row is None:
            raise SimulationFault(slot, "non-finite cost or position")
        if self.keep_trace:
            self.traces.append(SlotTrace(k, prob, cdi, nav_err, corrected))
        self.slot += 1
        return row

    def run(self) -> list[MetricsRow]:
        rows = []
        for _ in range(self.cfg.n_slots):
            try:
                rows.append(self.step())
            except SimulationFault:
                raise
            except (FloatingPointError, ValueError) as exc:
                raise SimulationFault(self.slot, str(exc)) from exc
        return rows


def _finite(*arrays) -> bool:
    return all(np.all(np.isfinite(a)) for a in arrays)


def run_simulation(cfg: ScenarioConfig, label: str = "proposed", seed: int | None = None,
                   keep_trace: bool = False) -> list[MetricsRow]:
    policy, hardening = resolve_label(label)
    return Simulation(cfg, policy, hardening, seed=seed, label=label.lower(), keep_trace=keep_trace).run()


def window_mean(rows, name: str, t0: float, t1: float, *, closed: bool = True) -> float:
    vals = [getattr(r, name) for r in rows if t0 - 1e-9 <= r.t and (r.t <= t1 + 1e-9 if closed else r.t < t1 - 1e-9)]
    return float(np.mean(vals)) if vals else math.nan
