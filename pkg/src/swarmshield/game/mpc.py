"""Rolling-horizon controller tying the outer game to the inner MFG."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import GameConfig
from .belief import AttackerBelief, ResidualLikelihood, update_belief
from .fictitious import UtilityParams, build_outer_game, fictitious_play
from .mfg import MfgGrid, MfgParams, MfgResult, solve_mfg


@dataclass
class MpcDecision:
    cdi: np.ndarray
    p_max: float
    a_eff: float
    belief: AttackerBelief
    mfg: MfgResult


def density_from_samples(grid: MfgGrid, s_values: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    """Nearest-node histogram of the swarm's deviation estimates, lightly floored."""
    idx = np.clip(np.rint(np.asarray(s_values) / grid.ds).astype(int), 0, len(grid.s_axis) - 1)
    counts = np.bincount(idx, minlength=len(grid.s_axis)).astype(float)
    hist = counts / max(counts.sum(), 1.0)
    m0 = (1 - floor) * hist + floor / len(hist)
    return m0 / (m0.sum() * grid.ds)


@dataclass
class MpcController:
    """Per-slot swarm controller.

    Each call updates the attacker belief, solves the outer game for the
    swarm-level range cap, solves the MFG over the current horizon and hands
    every UAV the first-step optimal range at its own deviation estimate.
    """

    cfg: GameConfig = field(default_factory=GameConfig)
    kappa0: float = 1.0
    sigma_k: float = 0.5
    r_sense: float = 50.0
    belief: AttackerBelief | None = None
    _fp_cache: dict = field(default_factory=dict, repr=False)
    _mfg_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        c = self.cfg
        if self.belief is None:
            self.belief = AttackerBelief(np.array([0.0, c.a_low, c.a_high]), np.array([0.98, 0.01, 0.01]))
        self.grid = MfgGrid.build(c.s_max, c.ns, c.t_h, c.nt)
        self.params = MfgParams(c.gamma, c.sigma, c.c_lat, c.c_en, c.c_risk, c.c_cong)
        self.likelihood = ResidualLikelihood(c.likelihood_floor, c.likelihood_gain, c.likelihood_sigma)
        self.utility = UtilityParams(c.alpha, c.beta, self.kappa0, self.sigma_k, c.rho_min, c.rho_max, self.r_sense)

    def swarm_cap(self, belief: AttackerBelief) -> float:
        key = tuple(np.round(belief.probs, 4))
        if key not in self._fp_cache:
            game = build_outer_game(belief, self.cfg.p_grid, self.utility, c_lat=self.cfg.c_lat,
                                    c_en=self.cfg.c_en, defense_cost_weight=self.cfg.defense_cost_weight)
            res = fictitious_play(game, self.cfg.fp_iters, self.cfg.fp_eps)
            self._fp_cache[key] = float(res.defender @ game.defender_actions)
        return self._fp_cache[key]

    def inner(self, a_eff: float, p_max: float, m0: np.ndarray) -> MfgResult:
        key = (round(a_eff, 3), round(p_max, 2), tuple(np.round(m0, 6)))
        if key not in self._mfg_cache:
            if len(self._mfg_cache) > 512:
                self._mfg_cache.clear()
            self._mfg_cache[key] = solve_mfg(self.grid, a_eff, p_max, m0, self.params,
                                             max_outer_iters=self.cfg.mfg_iters, damping=self.cfg.damping,
                                             tol=self.cfg.mfg_tol)
        return self._mfg_cache[key]

    def step(self, s_values: np.ndarray, k_stat: float | None) -> MpcDecision:
        if k_stat is not None:
            self.belief = update_belief(self.belief, k_stat, self.likelihood)
        p_max = self.swarm_cap(self.belief)
        a_eff = self.belief.expected_bias
        m0 = density_from_samples(self.grid, s_values)
        res = self.inner(a_eff, p_max, m0)
        s_clip = np.clip(s_values, 0.0, self.grid.s_axis[-1])
        cdi = np.interp(s_clip, self.grid.s_axis, res.p_star[:, 0])
        return MpcDecision(cdi=np.clip(cdi, 0.0, self.r_sense), p_max=p_max, a_eff=a_eff,
                           belief=self.belief, mfg=res)


def mpc_step(controller: MpcController, s_values, k_stat) -> np.ndarray:
    return controller.step(np.asarray(s_values, dtype=float), k_stat).cdi
