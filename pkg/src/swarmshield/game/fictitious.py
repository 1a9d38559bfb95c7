"""Outer attacker-vs-swarm game and its fictitious-play solver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..perception import residual_to_probability
from .belief import AttackerBelief

STEALTH_LEVELS = (0.0, 0.5, 1.0)


@dataclass
class UtilityParams:
    alpha: float = 1.0
    beta: float = 5.0
    kappa0: float = 1.0
    sigma_k: float = 0.5
    rho_min: float = 0.02
    rho_max: float = 0.2
    p_ref: float = 50.0

    def observability(self, p_max) -> np.ndarray:
        """Expected residual per unit bias rate; grows with the defender's range."""
        return self.rho_min + (self.rho_max - self.rho_min) * np.asarray(p_max, dtype=float) / self.p_ref


def detection_probability(a, p_max, params: UtilityParams | None = None):
    params = params or UtilityParams()
    return residual_to_probability(np.asarray(a, dtype=float) * params.observability(p_max), params.kappa0, params.sigma_k)


def attacker_utility(a, p_max, params: UtilityParams | None = None):
    """Deviation gained while undetected minus the penalty for being caught."""
    params = params or UtilityParams()
    pd = detection_probability(a, p_max, params)
    return params.alpha * np.asarray(a, dtype=float) * (1.0 - pd) - params.beta * pd


@dataclass
class OuterGame:
    defender_actions: np.ndarray
    attacker_actions: np.ndarray
    payoff: np.ndarray
    fp_counts: tuple[np.ndarray, np.ndarray] = field(default=None)

    def __post_init__(self):
        self.payoff = np.asarray(self.payoff, dtype=float)
        if not np.all(np.isfinite(self.payoff)):
            raise ValueError("payoff must be finite")
        if self.fp_counts is None:
            self.fp_counts = (np.zeros(self.payoff.shape[0], dtype=int), np.zeros(self.payoff.shape[1], dtype=int))


def build_outer_game(
    belief: AttackerBelief,
    p_grid,
    params: UtilityParams | None = None,
    *,
    c_lat: float = 0.02,
    c_en: float = 0.005,
    defense_cost_weight: float = 0.2,
) -> OuterGame:
    """Belief-weighted zero-sum game.

    Attacker types are the belief's bias levels; the attacker's action is a
    stealth level scaling its bias. The defender loses the expected attacker
    utility plus the per-UAV cost of running at the chosen range.
    """
    params = params or UtilityParams()
    p_grid = np.asarray(p_grid, dtype=float)
    stealth = np.asarray(STEALTH_LEVELS)
    u = attacker_utility(stealth[:, None, None] * belief.support[None, :, None], p_grid[None, None, :], params)
    expected = np.einsum("xkj,k->xj", u, belief.probs)
    defense = defense_cost_weight * (c_lat * p_grid + c_en * p_grid**2)
    return OuterGame(defender_actions=p_grid, attacker_actions=stealth, payoff=expected + defense[None, :])


@dataclass
class FPResult:
    defender: np.ndarray
    attacker: np.ndarray
    value: float
    iterations: int
    approximate: bool
    lower: float
    upper: float


def fictitious_play(game, max_iters: int = 10_000, eps: float = 1e-4) -> FPResult:
    """Alternating best responses to the opponent's empirical mixture.

    The attacker (rows) maximises the payoff, the defender (columns)
    minimises it. Ties resolve to the lowest index so runs are reproducible.
    """
    A = game.payoff if isinstance(game, OuterGame) else np.asarray(game, dtype=float)
    m, n = A.shape
    row_counts = np.zeros(m)
    col_counts = np.zeros(n)
    row_payoff = np.zeros(m)  # cumulative payoff of each row vs defender history
    col_payoff = np.zeros(n)  # cumulative payoff of each column vs attacker history
    prev_x = prev_y = None
    approximate = True
    it = 0
    for it in range(1, max_iters + 1):
        i = int(np.argmax(row_payoff))
        row_counts[i] += 1
        col_payoff += A[i]
        j = int(np.argmin(col_payoff))
        col_counts[j] += 1
        row_payoff += A[:, j]
        x = row_counts / it
        y = col_counts / it
        if prev_x is not None and max(np.max(np.abs(x - prev_x)), np.max(np.abs(y - prev_y))) < eps:
            approximate = False
            break
        prev_x, prev_y = x, y
    x = row_counts / row_counts.sum()
    y = col_counts / col_counts.sum()
    upper = float(np.max(A @ y))
    lower = float(np.min(x @ A))
    if isinstance(game, OuterGame):
        game.fp_counts = (row_counts.astype(int), col_counts.astype(int))
    return FPResult(defender=y, attacker=x, value=0.5 * (upper + lower), iterations=it,
                    approximate=approximate, lower=lower, upper=upper)
