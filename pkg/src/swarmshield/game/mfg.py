"""Mean-field game over per-UAV deviation estimates.

State ``s`` (deviation estimate, m) follows ``ds = (a - gamma*p*s) dt + sigma dW``.
Each UAV picks its collaborative range ``p`` to minimise the running cost

    c(s, p, m) = c_lat*p + c_en*p**2 + c_risk*s**2 + c_cong*p*pbar(m)

with terminal cost ``c_risk*s**2``. The HJB equation is marched backward and
the FPK equation forward, both with implicit upwind finite differences; every
time layer is one tridiagonal solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import NumericalFault
from .thomas import Tridiagonal, thomas_solve

log = logging.getLogger(__name__)

MASS_TOL = 1e-6
MASS_FAULT = 1e-3


@dataclass
class MfgParams:
    gamma: float = 0.4
    sigma: float = 0.5
    c_lat: float = 0.02
    c_en: float = 0.005
    c_risk: float = 0.1
    c_cong: float = 0.01

    def running_cost(self, s, p, pbar):
        return self.c_lat * p + self.c_en * p**2 + self.c_risk * s**2 + self.c_cong * p * pbar


@dataclass
class MfgGrid:
    s_axis: np.ndarray
    t_axis: np.ndarray
    V: np.ndarray | None = None
    m: np.ndarray | None = None
    p_star: np.ndarray | None = None

    @classmethod
    def build(cls, s_max: float = 30.0, ns: int = 61, t_h: float = 2.0, nt: int = 41) -> "MfgGrid":
        return cls(np.linspace(0.0, s_max, ns), np.linspace(0.0, t_h, nt))

    @property
    def ds(self) -> float:
        return float(self.s_axis[1] - self.s_axis[0])

    @property
    def dt(self) -> float:
        return float(self.t_axis[1] - self.t_axis[0])

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.s_axis), len(self.t_axis)

    def mass(self, m: np.ndarray) -> np.ndarray:
        return m.sum(axis=0) * self.ds


def normalize_density(grid: MfgGrid, m0: np.ndarray) -> np.ndarray:
    m0 = np.asarray(m0, dtype=float)
    total = m0.sum() * grid.ds
    if total <= 0:
        raise ValueError("density has no mass")
    return m0 / total


def optimal_control(s, dVds, pbar: float, p_max: float, params: MfgParams) -> np.ndarray:
    """Pointwise minimiser of c(s,p) - gamma*p*s*dV/ds, clamped to [0, p_max]."""
    if params.c_en <= 0:
        raise ValueError("c_en must be positive for a bounded minimiser")
    p = (params.gamma * s * dVds - params.c_lat - params.c_cong * pbar) / (2.0 * params.c_en)
    return np.clip(p, 0.0, p_max)


def consistent_pbar(s, dVds, m_col, ds: float, p_max: float, params: MfgParams) -> float:
    """Solve ``x = integral p*(s; x) m ds`` for the layer's mean range.

    The right side is non-increasing and piecewise linear in ``x``, so Newton
    steps from 0 settle on the unique root in a handful of iterations.
    """
    slope = params.c_cong / (2.0 * params.c_en)
    x = 0.0
    for _ in range(50):
        p_raw = (params.gamma * s * dVds - params.c_lat - params.c_cong * x) / (2.0 * params.c_en)
        p = np.clip(p_raw, 0.0, p_max)
        g = x - float((p * m_col).sum() * ds)
        free = (p_raw > 0.0) & (p_raw < p_max)
        dg = 1.0 + slope * float(m_col[free].sum() * ds)
        step = g / dg
        x -= step
        if abs(step) < 1e-12:
            break
    return max(x, 0.0)


def _gradient(V: np.ndarray, ds: float) -> np.ndarray:
    g = np.empty_like(V)
    g[1:-1] = (V[2:] - V[:-2]) / (2 * ds)
    g[0] = 0.0  # reflecting boundary
    g[-1] = (V[-1] - V[-2]) / ds
    return g


def hjb_system(V_next, s, drift, cost, dt, ds, sigma) -> Tridiagonal:
    n = len(s)
    D = 0.5 * sigma**2 / ds**2
    bp = np.maximum(drift, 0.0) / ds
    bm = np.maximum(-drift, 0.0) / ds
    up = -dt * (bp + D)
    lo = -dt * (bm + D)
    diag = 1.0 - up - lo
    upper = up[:-1].copy()
    lower = lo[1:].copy()
    # Neumann ghosts fold onto the interior neighbour
    upper[0] += lo[0]
    lower[-1] += up[-1]
    return Tridiagonal(lower=lower, diag=diag, upper=upper, rhs=V_next + dt * cost)


def mean_control(p_star: np.ndarray, m: np.ndarray, ds: float) -> np.ndarray:
    return (p_star * m).sum(axis=0) * ds


def solve_hjb(grid: MfgGrid, a_eff: float, p_max: float, m: np.ndarray | None = None,
              params: MfgParams | None = None, *, p_bar=None, terminal_weight: float | None = None):
    """Backward implicit sweep. Returns ``(V, p_star)`` on the (s, t) lattice.

    The mean-field coupling ``p_bar(t)`` is taken from ``p_bar`` if given;
    otherwise it is solved per time layer so that it equals the mean of the
    layer's own optimal control under ``m`` (zero when ``m`` is omitted).
    """
    params = params or MfgParams()
    s = grid.s_axis
    ns, nt = grid.shape
    ds, dt = grid.ds, grid.dt
    given = p_bar is not None
    if given:
        p_bar = np.broadcast_to(np.asarray(p_bar, dtype=float), (nt,)).copy()
    else:
        p_bar = np.zeros(nt)
    w_T = params.c_risk if terminal_weight is None else terminal_weight
    V = np.empty((ns, nt))
    P = np.empty((ns, nt))
    V[:, -1] = w_T * s**2
    for n in range(nt - 1, -1, -1):
        grad = _gradient(V[:, min(n + 1, nt - 1)], ds)
        if not given and m is not None:
            p_bar[n] = consistent_pbar(s, grad, m[:, n], ds, p_max, params)
        p = optimal_control(s, grad, p_bar[n], p_max, params)
        P[:, n] = p
        if n == nt - 1:
            continue
        drift = a_eff - params.gamma * p * s
        cost = params.running_cost(s, p, p_bar[n])
        sys = hjb_system(V[:, n + 1], s, drift, cost, dt, ds, params.sigma)
        if not sys.is_diagonally_dominant():
            raise NumericalFault("HJB system lost diagonal dominance; reduce the time step")
        V[:, n] = thomas_solve(sys)
    return V, P


def fpk_system(m_prev, drift, dt, ds, sigma) -> Tridiagonal:
    """Conservative upwind fluxes with zero-flux (reflecting) boundaries."""
    n = len(m_prev)
    Dp = 0.5 * sigma**2 / ds
    r = dt / ds
    bh = 0.5 * (drift[:-1] + drift[1:])  # interface drift i+1/2
    bp = np.maximum(bh, 0.0)
    bm = np.maximum(-bh, 0.0)
    diag = np.ones(n)
    diag[:-1] += r * (bp + Dp)
    diag[1:] += r * (bm + Dp)
    upper = -r * (bm + Dp)
    lower = -r * (bp + Dp)
    return Tridiagonal(lower=lower, diag=diag, upper=upper, rhs=np.asarray(m_prev, dtype=float))


def _column_dominant(sys: Tridiagonal) -> bool:
    d = np.abs(sys.diag)
    off = np.zeros_like(d)
    off[:-1] += np.abs(sys.lower)
    off[1:] += np.abs(sys.upper)
    return bool(np.all(d >= off - 1e-12))


def solve_fpk(grid: MfgGrid, p_star: np.ndarray, a_eff: float, m0: np.ndarray,
              params: MfgParams | None = None) -> np.ndarray:
    """Forward implicit sweep of the density; mass is conserved per step."""
    params = params or MfgParams()
    s = grid.s_axis
    ns, nt = grid.shape
    ds, dt = grid.ds, grid.dt
    m = np.empty((ns, nt))
    m[:, 0] = normalize_density(grid, m0)
    for n in range(nt - 1):
        drift = a_eff - params.gamma * p_star[:, n] * s
        sys = fpk_system(m[:, n], drift, dt, ds, params.sigma)
        if not _column_dominant(sys):
            raise NumericalFault("FPK system lost diagonal dominance")
        nxt = thomas_solve(sys)
        mass = nxt.sum() * ds
        drift_mass = abs(mass - 1.0)
        if drift_mass > MASS_FAULT:
            raise NumericalFault(f"FPK mass drift {drift_mass:.2e} at step {n}")
        if drift_mass > MASS_TOL:
            log.warning("FPK mass drift %.2e exceeds %.0e at step %d", drift_mass, MASS_TOL, n)
        m[:, n + 1] = nxt / mass
    return m


@dataclass
class MfgResult:
    V: np.ndarray
    m: np.ndarray
    p_star: np.ndarray
    iterations: int
    converged: bool
    changes: list


def _l1_change(a: np.ndarray, b: np.ndarray, ds: float) -> float:
    return float(np.max(np.abs(a - b).sum(axis=0) * ds))


def solve_mfg(grid: MfgGrid, a_eff: float, p_max: float, m0: np.ndarray,
              params: MfgParams | None = None, *, max_outer_iters: int = 20,
              damping: float = 1.0, tol: float = 1e-4, max_reductions: int = 5,
              m_init: np.ndarray | None = None) -> MfgResult:
    """Alternate HJB (given m) and FPK (given p*) until the density settles.

    ``m_init`` is the starting guess for the density path (default: ``m0``
    held constant); it changes the iterates, not the problem.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    params = params or MfgParams()
    ns, nt = grid.shape
    ds = grid.ds
    m0 = normalize_density(grid, m0)
    if m_init is None:
        m = np.repeat(m0[:, None], nt, axis=1)
    else:
        m = np.asarray(m_init, dtype=float)
        if m.shape != (ns, nt):
            raise ValueError("m_init must cover the (s, t) lattice")
    changes: list[float] = []
    rising = 0
    reductions = 0
    for it in range(1, max_outer_iters + 1):
        V, P = solve_hjb(grid, a_eff, p_max, m, params)
        m_new = solve_fpk(grid, P, a_eff, m0, params)
        if params.c_cong == 0:
            # HJB does not see m: one pass is the fixed point
            return MfgResult(V, m_new, P, it, True, [0.0])
        change = _l1_change(m_new, m, ds)
        changes.append(change)
        if change < tol:
            return MfgResult(V, m_new, P, it, True, changes)
        rising = rising + 1 if len(changes) > 1 and change > changes[-2] else 0
        if rising >= 3:
            reductions += 1
            if reductions > max_reductions:
                raise NumericalFault("MFG iteration keeps oscillating after damping reductions")
            damping *= 0.5
            rising = 0
            log.info("MFG oscillation: damping reduced to %g", damping)
        m = (1.0 - damping) * m + damping * m_new
    log.info("MFG hit the iteration cap; result flagged approximate")
    return MfgResult(V, m, P, max_outer_iters, False, changes)
