"""Swarm-level Bayesian belief over the attacker's bias rate."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-9


@dataclass
class AttackerBelief:
    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=float)
        self.probs = np.asarray(self.probs, dtype=float)
        if self.support.shape != self.probs.shape:
            raise ValueError("support and probs differ in length")
        if np.any(self.probs < 0) or not np.isclose(self.probs.sum(), 1.0):
            raise ValueError("probs must lie on the simplex")

    @classmethod
    def uniform(cls, support) -> "AttackerBelief":
        support = np.asarray(support, dtype=float)
        return cls(support, np.full(len(support), 1.0 / len(support)))

    @property
    def expected_bias(self) -> float:
        return float(self.support @ self.probs)

    @property
    def attack_mass(self) -> float:
        return float(self.probs[self.support > 0].sum())


@dataclass
class ResidualLikelihood:
    """Gaussian model of the swarm-max residual given a bias rate.

    The mean is ``floor + gain * a``: the noise-level maximum plus the drift
    accumulated over ``gain`` seconds of spoofing.
    """

    floor: float = 0.3
    gain: float = 0.1
    sigma: float = 0.4

    def __call__(self, k_stat: float, support: np.ndarray) -> np.ndarray:
        mu = self.floor + self.gain * support
        z = (k_stat - mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * np.sqrt(2 * np.pi))

    def log(self, k_stat: float, support: np.ndarray) -> np.ndarray:
        z = (k_stat - (self.floor + self.gain * support)) / self.sigma
        return -0.5 * z * z - np.log(self.sigma * np.sqrt(2 * np.pi))


def bayes_posterior(probs: np.ndarray, likelihoods: np.ndarray) -> np.ndarray:
    likelihoods = np.asarray(likelihoods, dtype=float)
    post = probs * likelihoods
    total = post.sum()
    if not total > 0 or not np.isfinite(total):
        log.warning("all likelihoods vanished; keeping prior")
        return probs.copy()
    post = np.maximum(post / total, PROB_FLOOR)
    return post / post.sum()


def update_belief(belief: AttackerBelief, k_stat: float, likelihood=None, *, likelihoods=None) -> AttackerBelief:
    """One Bayes step from an observed residual statistic.

    Pass explicit ``likelihoods`` to bypass the residual model.
    """
    if likelihoods is None:
        likelihood = likelihood or ResidualLikelihood()
        # log space: a residual far above every mean must not underflow all terms
        logl = likelihood.log(k_stat, belief.support)
        likelihoods = np.exp(logl - logl.max())
    return AttackerBelief(belief.support.copy(), bayes_posterior(belief.probs, likelihoods))
