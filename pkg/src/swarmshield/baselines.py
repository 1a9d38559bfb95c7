"""Comparison strategies: three CDI policies and three hardening strategies."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .attackgraph.datalog import AtomicFact, Database, HornRule, _ground, _match, fixpoint, join
from .attackgraph.paths import PRIV_PRED, AttackPath, _attacker, _rule_roles, trace_paths_pr
from .game.mfg import MfgParams


class PolicyKind(enum.Enum):
    PROPOSED = "proposed"
    COS = "cos"
    LFS = "lfs"
    GS = "gs"


class HardeningKind(enum.Enum):
    PROPOSED = "proposed"
    FLS = "fls"
    SAS = "sas"
    GP = "gp"


# --- CDI policies ------------------------------------------------------------


def cos_policy(s, r_sense: float = 50.0) -> np.ndarray:
    """Everyone cooperates at full sensing range, always."""
    return np.full(np.shape(s), float(r_sense))


def lfs_policy(s, gain: float = 2.0, r_sense: float = 50.0) -> np.ndarray:
    if gain <= 0:
        raise ValueError("gain must be positive")
    return np.clip(gain * np.asarray(s, dtype=float), 0.0, r_sense)


def gs_policy(s, params: MfgParams | None = None, *, r_sense: float = 50.0, step: float = 1.0,
              dt: float = 0.1) -> np.ndarray:
    """Myopic one-step minimiser of ``c(s, p) + c_risk * s_next**2``.

    ``s_next = s - gamma * p * s * dt`` uses the controlled part of the
    dynamics only: the greedy rule neither anticipates the attack drift nor
    the population's response.
    """
    params = params or MfgParams()
    s = np.asarray(s, dtype=float)
    grid = np.arange(0.0, r_sense + 1e-9, step)
    S = s[..., None]
    s_next = S - params.gamma * grid * S * dt
    cost = params.c_lat * grid + params.c_en * grid**2 + params.c_risk * S**2 + params.c_risk * s_next**2
    return grid[np.argmin(cost, axis=-1)]


# --- hardening baselines -----------------------------------------------------


@dataclass
class HardenResult:
    paths: list
    overhead: float
    firings: int = 0
    truncated: bool = False
    retries: int = 0
    extra: dict = field(default_factory=dict)


def _weight(mult, preds, rows) -> int:
    # a raw-record reasoner fires once per combination of duplicate records
    if mult is None:
        return 1
    w = 1
    for atom_pred, row in zip(preds, rows):
        w *= mult.get(AtomicFact(atom_pred, row), 1)
    return w


def _successors(db: Database, step_rules, state, counter, mult=None):
    node, priv = state
    out = []
    for rule, (pi, vi) in step_rules:
        prem = rule.body[pi]
        b = _match(prem, (_attacker(prem), node, priv), {})
        if b is None:
            continue
        rest = [a for i, a in enumerate(rule.body) if i != pi]
        preds = [a.pred for a in rest]
        for binding, rows in join(db, rest, b):
            counter[0] += _weight(mult, preds, rows)
            head = _ground(rule.head, binding)
            vid = binding[rule.body[vi].args[0]] if rule.body[vi].args[0] in binding else rule.body[vi].args[0]
            out.append(((node, priv, vid, head.args[1], head.args[2]), rule.id))
    out.sort()
    return out


def _roots(db: Database, rules: list[HornRule], counter, mult=None) -> list:
    roots = set()
    for r in rules:
        if r.head.pred == PRIV_PRED and all(a.pred != PRIV_PRED for a in r.body):
            preds = [a.pred for a in r.body]
            for binding, rows in join(db, r.body):
                counter[0] += _weight(mult, preds, rows)
                h = _ground(r.head, binding)
                roots.add((h.args[1], h.args[2]))
    return sorted(roots)


def record_counts(records) -> Counter:
    """Multiplicity of each parsed record, duplicates included."""
    return Counter(records)


def fls_harden(facts, rules: list[HornRule], *, depth_cap: int = 8, firing_cap: int = 200_000,
               firing_cost: float = 1.0, multiplicity: Counter | None = None) -> HardenResult:
    """Exhaustive depth-first search over raw privilege states.

    No provenance, memoisation or deduplication: every visit of a state
    re-fires the step rules against the base facts, so the firing count grows
    with the number of simple state sequences. With ``multiplicity`` the
    search reads raw records and fires once per duplicate combination.
    """
    db = Database(facts)
    mult = multiplicity
    step_rules = [(r, _rule_roles(r)) for r in rules if _rule_roles(r) is not None]
    assets = {row[0] for row in db.rel("asset").rows}
    counter = [0]
    found: dict[tuple, AttackPath] = {}
    truncated = False

    def dfs(state, on_path, prefix, rids):
        nonlocal truncated
        if len(prefix) >= depth_cap or truncated:
            return
        for step, rid in _successors(db, step_rules, state, counter, mult):
            if counter[0] > firing_cap:
                truncated = True
                return
            nxt = (step[3], step[4])
            if nxt in on_path:
                continue
            path = prefix + (step,)
            if step[3] in assets:
                found.setdefault(path, AttackPath(path, rids + (rid,)))
            on_path.add(nxt)
            dfs(nxt, on_path, path, rids + (rid,))
            on_path.discard(nxt)

    for root in _roots(db, rules, counter, mult):
        dfs(root, {root}, (), ())
    paths = [found[k] for k in sorted(found)]
    return HardenResult(paths, firing_cost * counter[0], counter[0], truncated)


def sas_harden(facts, rules: list[HornRule], error_prob: float = 0.2, rng: np.random.Generator | None = None,
               *, depth_cap: int = 8, firing_cost: float = 1.0, verify_cost: float = 5.0,
               multiplicity: Counter | None = None) -> HardenResult:
    """Single sequential reasoner with hallucinated steps.

    One full (non-incremental) fixpoint pass, then each path is verified by
    a single instance. Every step hallucinated with ``error_prob`` fails its
    check and is retried at ``verify_cost`` until it comes out right, so the
    accepted path set stays sound.
    """
    if not 0.0 <= error_prob < 1.0:
        raise ValueError("error_prob must lie in [0, 1)")
    if error_prob > 0 and rng is None:
        raise ValueError("an rng is required when error_prob > 0")
    res = fixpoint(facts, rules)
    firings = res.firings
    if multiplicity is not None:
        firings = sum(_weight(multiplicity, [f.functor for f in d.body], [f.args for f in d.body])
                      for ds in res.provenance.values() for d in ds)
    paths = trace_paths_pr(res, rules, depth_cap=depth_cap)
    retries = 0
    for p in paths:
        for _ in p.steps:
            while error_prob > 0 and rng.uniform() < error_prob:
                retries += 1
    overhead = firing_cost * firings + verify_cost * (len(paths) + retries)
    return HardenResult(paths, overhead, firings, False, retries)


def gp_harden(new_vulns, patch_cost: float = 50.0) -> HardenResult:
    """Patch every newly reported vulnerability at once, no questions asked."""
    vids = sorted(set(new_vulns))
    return HardenResult([], patch_cost * len(vids), extra={"patches": vids})
