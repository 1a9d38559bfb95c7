import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmshield.config import GameConfig
from swarmshield.errors import SingularSystem
from swarmshield.game.belief import AttackerBelief, ResidualLikelihood, update_belief
from swarmshield.game.fictitious import (
    UtilityParams,
    attacker_utility,
    build_outer_game,
    fictitious_play,
)
from swarmshield.game.mfg import (
    MfgGrid,
    MfgParams,
    fpk_system,
    normalize_density,
    solve_fpk,
    solve_hjb,
    solve_mfg,
)
from swarmshield.game.mpc import MpcController
from swarmshield.game.thomas import Tridiagonal, thomas_solve


# --- Thomas ---------------------------------------------------------------


def test_thomas_hand_3x3():
    sys = Tridiagonal(lower=np.array([-1.0, -1]), diag=np.array([2.0, 2, 2]), upper=np.array([-1.0, -1]),
                      rhs=np.array([1.0, 0, 1]))
    assert np.allclose(thomas_solve(sys), [1, 1, 1], atol=1e-14)


@pytest.mark.parametrize("n", [50, 200])
def test_thomas_matches_dense_solve(n):
    rng = np.random.default_rng(n)
    lo, up = rng.uniform(-1, 1, n - 1), rng.uniform(-1, 1, n - 1)
    diag = 2.5 + rng.uniform(0, 1, n)
    sys = Tridiagonal(lo, diag, up, rng.normal(size=n))
    dense = np.linalg.solve(sys.dense(), sys.rhs)
    assert np.max(np.abs(thomas_solve(sys) - dense)) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.integers(0, 2**31 - 1))
def test_thomas_residual_small_for_dominant_systems(n, seed):
    rng = np.random.default_rng(seed)
    lo, up = rng.uniform(-1, 1, n - 1), rng.uniform(-1, 1, n - 1)
    sys = Tridiagonal(lo, 2.0 + rng.uniform(0, 1, n), up, rng.normal(size=n))
    x = thomas_solve(sys)
    assert np.max(np.abs(sys.dense() @ x - sys.rhs)) <= 1e-10


def test_thomas_zero_pivot():
    with pytest.raises(SingularSystem):
        thomas_solve(Tridiagonal(np.array([1.0]), np.array([0.0, 1.0]), np.array([1.0]), np.ones(2)))


# --- HJB / FPK / MFG --------------------------------------------------------


def _dp_oracle(grid, a, p_max, prm, n_p=201, sub=100):
    """Explicit Markov-chain dynamic programme over a discretised control set."""
    s, ds = grid.s_axis, grid.ds
    dt = grid.dt / sub
    ps = np.linspace(0.0, p_max, n_p)[:, None]
    D = 0.5 * prm.sigma**2 / ds**2
    b = a - prm.gamma * ps * s[None, :]
    pu = dt * (np.maximum(b, 0) / ds + D)
    pd = dt * (np.maximum(-b, 0) / ds + D)
    assert (pu + pd).max() <= 1.0
    run = dt * (prm.c_lat * ps + prm.c_en * ps**2 + prm.c_risk * s[None, :] ** 2)
    V = prm.c_risk * s**2
    for _ in range((len(grid.t_axis) - 1) * sub):
        up = np.append(V[1:], V[-2])
        dn = np.insert(V[:-1], 0, V[1])
        V = np.min(run + pu * up + pd * dn + (1 - pu - pd) * V, axis=0)
    return V


def test_hjb_matches_dp_oracle_on_21x21():
    grid = MfgGrid.build(s_max=10.0, ns=21, t_h=2.0, nt=21)
    prm = MfgParams()
    V, _ = solve_hjb(grid, 3.0, 20.0, None, prm, p_bar=0.0)
    oracle = _dp_oracle(grid, 3.0, 20.0, prm)
    assert np.max(np.abs(V[:, 0] - oracle)) / np.max(np.abs(oracle)) <= 0.05


def test_fpk_step_conserves_mass():
    grid = MfgGrid.build()
    rng = np.random.default_rng(1)
    m = normalize_density(grid, rng.uniform(0.1, 1.0, grid.shape[0]))
    for _ in range(30):
        drift = rng.uniform(-20, 20, grid.shape[0])
        m = thomas_solve(fpk_system(m, drift, grid.dt, grid.ds, 0.5))
        assert abs(m.sum() * grid.ds - 1.0) <= 1e-6


def test_fpk_pure_diffusion_variance_growth():
    grid = MfgGrid.build(s_max=30.0, ns=601, t_h=2.0, nt=201)
    s = grid.s_axis
    m0 = np.exp(-0.5 * ((s - 15.0) / 0.2) ** 2)
    prm = MfgParams(sigma=0.5)
    m = solve_fpk(grid, np.zeros(grid.shape), 0.0, m0, prm)

    def var(col):
        w = col * grid.ds
        mu = (s * w).sum()
        return ((s - mu) ** 2 * w).sum()

    grown = var(m[:, -1]) - var(m[:, 0])
    assert grown == pytest.approx(prm.sigma**2 * grid.t_axis[-1], rel=0.10)


def _default_mfg_inputs():
    c = GameConfig()
    grid = MfgGrid.build(c.s_max, c.ns, c.t_h, c.nt)
    prm = MfgParams(c.gamma, c.sigma, c.c_lat, c.c_en, c.c_risk, c.c_cong)
    return c, grid, prm


def test_mfg_converges_on_defaults():
    c, grid, prm = _default_mfg_inputs()
    m0 = np.exp(-0.5 * ((grid.s_axis - 3.0) / 2.0) ** 2)
    res = solve_mfg(grid, c.a_high, 50.0, m0, prm, max_outer_iters=20, tol=1e-4)
    assert res.converged and res.iterations <= 20
    assert res.changes[-1] < 1e-4


def test_mfg_fixed_point_insensitive_to_start():
    # uniqueness is probed, not assumed: two initial densities, same terminal data
    c, grid, prm = _default_mfg_inputs()
    s = grid.s_axis
    m0 = np.exp(-0.5 * ((s - 2.0) / 1.5) ** 2)
    flat = np.full(grid.shape, 1.0 / s[-1])
    a = solve_mfg(grid, c.a_low, 40.0, m0, prm)
    b = solve_mfg(grid, c.a_low, 40.0, m0, prm, m_init=flat)
    assert a.converged and b.converged
    assert np.max(np.abs(a.p_star - b.p_star)) <= 1e-3


def test_optimal_control_respects_cap():
    c, grid, prm = _default_mfg_inputs()
    _, P = solve_hjb(grid, c.a_high, 25.0, None, prm, p_bar=0.0)
    assert P.min() >= 0.0 and P.max() <= 25.0


# --- belief -----------------------------------------------------------------


def test_bayes_arithmetic():
    b = AttackerBelief.uniform([0.0, 6.0, 12.0])
    post = update_belief(b, 0.0, likelihoods=np.array([0.1, 0.2, 0.7]))
    assert np.allclose(post.probs, [0.1, 0.2, 0.7])


def test_belief_concentrates_under_high_residuals():
    lik = ResidualLikelihood()
    rng = np.random.default_rng(7)
    b = AttackerBelief(np.array([0.0, 6.0, 12.0]), np.array([0.98, 0.01, 0.01]))
    trace = []
    for _ in range(50):
        k = lik.floor + lik.gain * 12.0 + rng.normal(0, lik.sigma)
        b = update_belief(b, k, lik)
        trace.append(b.probs[2])
    assert trace[-1] > 0.99
    # monotone in expectation: windowed means never fall
    means = np.convolve(trace, np.ones(10) / 10, mode="valid")
    assert np.all(np.diff(means[::10]) >= -1e-9)


def test_belief_survives_extreme_residual():
    b = AttackerBelief.uniform([0.0, 6.0, 12.0])
    post = update_belief(b, 1e4)
    assert np.isclose(post.probs.sum(), 1.0) and post.probs[2] > 0.99


# --- outer game -------------------------------------------------------------


def test_utility_non_increasing_in_defender_range():
    p = np.linspace(0, 50, 101)
    for a in (1.0, 6.0, 12.0):
        assert np.all(np.diff(attacker_utility(a, p)) <= 1e-12)


def test_utility_has_interior_attacker_optimum():
    a = np.linspace(0, 100, 2001)
    du = np.diff(attacker_utility(a, 20.0, UtilityParams()))
    sign = np.sign(du[np.abs(du) > 1e-12])
    assert np.count_nonzero(np.diff(sign)) == 1


def test_fp_matching_pennies():
    res = fictitious_play(np.array([[1.0, -1.0], [-1.0, 1.0]]), max_iters=10_000, eps=0.0)
    assert np.allclose(res.attacker, [0.5, 0.5], atol=0.05)
    assert np.allclose(res.defender, [0.5, 0.5], atol=0.05)


def _grid_minimax(A, step=0.005):
    """Defender (columns) minimises the attacker's best response over a simplex grid."""
    best = np.inf
    ticks = np.arange(0.0, 1.0 + 1e-12, step)
    for y0, y1 in itertools.product(ticks, ticks):
        if y0 + y1 <= 1.0 + 1e-12:
            y = np.array([y0, y1, max(0.0, 1.0 - y0 - y1)])
            best = min(best, float(np.max(A @ y)))
    return best


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fp_value_matches_grid_minimax(seed):
    A = np.random.default_rng(seed).uniform(-1, 1, size=(3, 3))
    res = fictitious_play(A, max_iters=10_000, eps=0.0)
    assert res.lower - 1e-9 <= res.upper
    assert res.value == pytest.approx(_grid_minimax(A), abs=0.02)


def test_outer_game_is_finite_and_shaped():
    b = AttackerBelief.uniform([0.0, 6.0, 12.0])
    g = build_outer_game(b, GameConfig().p_grid)
    assert g.payoff.shape == (3, len(GameConfig().p_grid))
    assert np.all(np.isfinite(g.payoff))


# --- MPC --------------------------------------------------------------------


def test_attack_belief_raises_mean_cdi():
    s = np.linspace(0, 6, 200)
    calm = MpcController(belief=AttackerBelief(np.array([0.0, 6.0, 12.0]), np.array([1 - 2e-9, 1e-9, 1e-9])))
    alarmed = MpcController(belief=AttackerBelief(np.array([0.0, 6.0, 12.0]), np.array([1e-9, 1e-9, 1 - 2e-9])))
    assert alarmed.step(s, None).cdi.mean() > calm.step(s, None).cdi.mean()


def test_mpc_cdi_bounded_by_sensing_radius():
    ctl = MpcController()
    out = ctl.step(np.linspace(0, 40, 50), 5.0)
    assert out.cdi.min() >= 0.0 and out.cdi.max() <= 50.0
