"""Cooperative spoofing detection and anchor-based position reconstruction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, InsufficientAnchors, IsolatedNode

MIN_ANCHORS = 4


@dataclass
class EdgeResidual:
    uav: int
    k: float
    n_neighbors: int


@dataclass
class SpoofBelief:
    uav: int
    prob: float


@dataclass
class AnchorSet:
    anchors: list[int]
    positions: np.ndarray
    ranges: np.ndarray


def compute_residual(uav: int, own_pos, neighbor_reports, measured_ranges) -> EdgeResidual:
    """Mean absolute mismatch between ranged and GPS-implied neighbour distances."""
    reports = np.asarray(neighbor_reports, dtype=float).reshape(-1, 3)
    ranges = np.asarray(measured_ranges, dtype=float).reshape(-1)
    if len(reports) == 0:
        raise IsolatedNode(f"UAV {uav} has no line-of-sight neighbour")
    if len(reports) != len(ranges):
        raise ValueError("one range per neighbour report is required")
    implied = np.linalg.norm(reports - np.asarray(own_pos, dtype=float), axis=1)
    return EdgeResidual(uav, float(np.mean(np.abs(implied - ranges))), len(reports))


def residual_to_probability(k, kappa0: float = 1.0, sigma_k: float = 0.5):
    """Logistic map from residual to spoof probability; 0.5 at ``kappa0``."""
    if sigma_k <= 0:
        raise ValueError("sigma_k must be positive")
    z = (np.asarray(k, dtype=float) - kappa0) / sigma_k
    # numerically safe logistic
    out = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    return float(out) if np.ndim(out) == 0 else out


def swarm_residuals(own: np.ndarray, reports: np.ndarray, ranges: np.ndarray, mask: np.ndarray):
    """Vectorised residuals for a whole swarm.

    Returns ``(k, n_neighbors, discrepancy)`` where ``discrepancy[i, j]`` is the
    per-link term UAV ``i`` attributes to neighbour ``j``. Isolated UAVs get
    ``k = 0`` (they fall back to their own GPS).
    """
    diff = own[:, None, :] - reports[None, :, :]
    implied = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    disc = np.abs(implied - ranges)
    disc = np.where(mask, disc, 0.0)
    n = mask.sum(axis=1)
    k = np.divide(disc.sum(axis=1), n, out=np.zeros(len(own)), where=n > 0)
    return k, n, disc


def linearize(positions: np.ndarray, ranges: np.ndarray):
    """Difference every range equation against the first anchor's."""
    a1, r1 = positions[0], ranges[0]
    A = 2.0 * (positions[1:] - a1)
    b = (np.sum(positions[1:] ** 2, axis=1) - a1 @ a1) - ranges[1:] ** 2 + r1**2
    return A, b


def _check_geometry(positions: np.ndarray, max_condition: float) -> None:
    A = 2.0 * (positions[1:] - positions[0])
    sv = np.linalg.svd(A, compute_uv=False)
    if len(sv) < 3 or sv[-1] <= sv[0] * 1e-12 or sv[0] / sv[-1] > max_condition:
        raise DegenerateGeometry("anchors are coplanar or badly conditioned")


def select_anchors(
    victim: int,
    candidates,
    probs,
    positions,
    ranges,
    *,
    trust=None,
    cutoff: float = 0.4,
    trust_floor: float = -np.inf,
    cap: int = 8,
    max_condition: float = 1e6,
) -> AnchorSet:
    """Pick up to ``cap`` low-suspicion, trusted neighbours ordered by (prob, id).

    ``probs``, ``positions``, ``ranges`` and ``trust`` are aligned with
    ``candidates``.
    """
    cand = np.asarray(candidates, dtype=int)
    probs = np.asarray(probs, dtype=float)
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    rng_ = np.asarray(ranges, dtype=float)
    ok = (probs < cutoff) & (cand != victim)
    if trust is not None:
        ok &= np.asarray(trust, dtype=float) >= trust_floor
    idx = np.flatnonzero(ok)
    if len(idx) < MIN_ANCHORS:
        raise InsufficientAnchors(f"{len(idx)} qualifying anchors for UAV {victim}")
    order = idx[np.lexsort((cand[idx], probs[idx]))][:cap]
    _check_geometry(pos[order], max_condition)
    return AnchorSet(anchors=cand[order].tolist(), positions=pos[order], ranges=rng_[order])


def reconstruct_position(anchors: AnchorSet, max_condition: float = 1e6):
    """Least-squares multilateration. Returns ``(estimate, residual_norm)``."""
    if len(anchors.anchors) < MIN_ANCHORS:
        raise InsufficientAnchors(f"{len(anchors.anchors)} anchors")
    A, b = linearize(anchors.positions, anchors.ranges)
    sol, _, rank, sv = np.linalg.lstsq(A, b, rcond=None)
    if rank < 3 or sv[0] / sv[-1] > max_condition:
        raise DegenerateGeometry("rank-deficient multilateration system")
    return sol, float(np.linalg.norm(A @ sol - b))


def fuse_position(pos_gps, pos_recon, prob: float) -> np.ndarray:
    if not 0.0 <= prob <= 1.0:
        raise ValueError("prob must lie in [0, 1]")
    return (1.0 - prob) * np.asarray(pos_gps, dtype=float) + prob * np.asarray(pos_recon, dtype=float)
