"""Behavioral authentication: probing tasks, type inference and decayed trust."""

from __future__ import annotations

import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .swarm import UavState

log = logging.getLogger(__name__)

P_FLOOR = 1e-6


@dataclass
class ProbeTask:
    target_pos: np.ndarray
    deadline: float
    is_probe: bool = True

    def __post_init__(self):
        self.target_pos = np.asarray(self.target_pos, dtype=float)
        if self.deadline <= 0:
            raise ValueError("deadline must be positive")


@dataclass
class BehaviorSignal:
    delay: float
    accuracy_err: float
    energy: float = 0.0

    def __post_init__(self):
        if self.delay < 0 or self.accuracy_err < 0:
            raise ValueError("delay and accuracy_err must be non-negative")


@dataclass
class TypeBelief:
    p_legit: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.p_legit <= 1.0:
            raise ValueError("p_legit must lie in [0, 1]")


@dataclass
class ExecutionModel:
    conserve_factor: float = 0.6
    stop_short: float = 4.0
    delay_noise: float = 0.1  # std of delay as a fraction of the deadline
    accuracy_noise: float = 1.0
    v_max: float = 15.0
    energy_coeff: float = 0.05


def simulate_task_execution(
    uav: UavState,
    task: ProbeTask,
    rng: np.random.Generator | None = None,
    *,
    start_pos=None,
    misbehaving: bool | None = None,
    model: ExecutionModel | None = None,
) -> BehaviorSignal:
    """Fly ``uav`` to the task target and report delay and arrival error.

    ``misbehaving`` defaults to the UAV's role; pass ``False`` for an insider
    still in its camouflage phase. The noise draws are the same for both
    types so the RNG stream does not depend on the role. ``rng=None`` gives
    the noiseless signal.
    """
    model = model or ExecutionModel()
    start = np.asarray(uav.pos_true if start_pos is None else start_pos, dtype=float)
    distance = float(np.linalg.norm(task.target_pos - start))
    v_req = distance / task.deadline
    if misbehaving is None:
        misbehaving = uav.is_insider
    if rng is not None:
        eps_d, eps_e = rng.normal(size=2)
    else:
        eps_d = eps_e = 0.0
    speed = min(v_req, model.v_max)
    shortfall = 0.0
    if misbehaving:
        speed = model.conserve_factor * speed
        shortfall = model.stop_short
    flown = max(distance - shortfall, 0.0)
    delay = distance / speed if speed > 0 else 0.0
    delay = max(delay + model.delay_noise * task.deadline * eps_d, 0.0)
    accuracy = abs(shortfall + model.accuracy_noise * eps_e)
    energy = model.energy_coeff * speed**2 * flown
    return BehaviorSignal(delay=delay, accuracy_err=accuracy, energy=energy)


@dataclass
class TypeLikelihood:
    """Class-conditional Gaussians on (delay / deadline, accuracy error)."""

    legit_ratio: tuple[float, float] = (1.0, 0.1)
    insider_ratio: tuple[float, float] = (1.67, 0.25)
    legit_acc: tuple[float, float] = (0.0, 1.0)
    insider_acc: tuple[float, float] = (4.0, 2.0)

    @staticmethod
    def _logpdf(x: float, mu_sd: tuple[float, float]) -> float:
        mu, sd = mu_sd
        z = (x - mu) / sd
        return -0.5 * z * z - math.log(sd * math.sqrt(2 * math.pi))

    def log_likelihoods(self, signal: BehaviorSignal, deadline: float) -> tuple[float, float]:
        r = signal.delay / deadline
        ll = self._logpdf(r, self.legit_ratio) + self._logpdf(signal.accuracy_err, self.legit_acc)
        lm = self._logpdf(r, self.insider_ratio) + self._logpdf(signal.accuracy_err, self.insider_acc)
        return ll, lm


def bayes_update(
    belief: TypeBelief,
    signal: BehaviorSignal | None = None,
    *,
    deadline: float = 1.0,
    model: TypeLikelihood | None = None,
    likelihoods: tuple[float, float] | None = None,
) -> TypeBelief:
    """Posterior probability that the UAV is legitimate.

    ``likelihoods=(L_L, L_M)`` bypasses the signal model. The model path works
    in log space so far-tail signals cannot underflow both terms.
    """
    p = belief.p_legit
    if likelihoods is not None:
        l_l, l_m = likelihoods
        total = p * l_l + (1 - p) * l_m
        if not total > 0:
            log.warning("zero total likelihood; type belief unchanged")
            return TypeBelief(p)
        post = p * l_l / total
    else:
        if signal is None:
            raise ValueError("need a signal or explicit likelihoods")
        ll, lm = (model or TypeLikelihood()).log_likelihoods(signal, deadline)
        p_c = min(max(p, P_FLOOR), 1 - P_FLOOR)
        logit = math.log(p_c) - math.log1p(-p_c) + ll - lm
        post = 1.0 / (1.0 + math.exp(-logit)) if logit > -700 else 0.0
    return TypeBelief(min(max(post, P_FLOOR), 1 - P_FLOOR))


class Access(enum.Enum):
    ADMIT = "admit"
    ESCALATE = "escalate"
    REJECT = "reject"


def graded_access(belief, theta_hi: float = 0.9, theta_lo: float = 0.2) -> Access:
    if not 0.0 <= theta_lo < theta_hi <= 1.0:
        raise ConfigError("need 0 <= theta_lo < theta_hi <= 1")
    p = belief.p_legit if isinstance(belief, TypeBelief) else float(belief)
    if p <= theta_lo:  # reject side is inclusive
        return Access.REJECT
    if p >= theta_hi:
        return Access.ADMIT
    return Access.ESCALATE


class Outcome(enum.Enum):
    GOOD = "good"
    BETRAYAL = "betrayal"


def update_local_trust(T: float, outcome: Outcome, lam: float = 0.9, eta: float = 3.0) -> float:
    if not 0.0 < lam < 1.0 or eta < 1.0:
        raise ValueError("need 0 < lam < 1 and eta >= 1")
    if outcome is Outcome.GOOD:
        T = lam * T + (1 - lam)
    else:
        T = lam * T - (1 - lam) * eta
    return min(max(T, -1.0), 1.0)


@dataclass
class TrustLedger:
    """Trust held about a single target by its observers."""

    window: int = 10
    lam: float = 0.9
    eta: float = 3.0
    initial: float = 0.0
    trust: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    history: deque = field(default=None)

    def __post_init__(self):
        if self.history is None:
            self.history = deque(maxlen=self.window)

    def record(self, observer, outcome: Outcome) -> float:
        t = update_local_trust(self.trust.get(observer, self.initial), outcome, self.lam, self.eta)
        self.trust[observer] = t
        self.counts[observer] = self.counts.get(observer, 0) + 1
        return t

    def set(self, observer, value: float, count: int = 1) -> None:
        self.trust[observer] = min(max(float(value), -1.0), 1.0)
        self.counts[observer] = count

    def instantaneous(self) -> float | None:
        total = sum(self.counts.get(o, 0) for o in self.trust)
        if total == 0:
            return None
        return sum(self.counts.get(o, 0) * t for o, t in self.trust.items()) / total

    def close_slot(self) -> None:
        joint = self.instantaneous()
        if joint is not None:
            self.history.append(joint)


def aggregate_trust(ledger: TrustLedger) -> float:
    """Sliding-window mean of the count-weighted joint score; 0 when empty."""
    if not ledger.history:
        return 0.0
    return float(np.mean(ledger.history))


class SwarmTrust:
    """Dense per-swarm trust store used by the simulator.

    ``T[i, j]`` is observer ``i``'s local trust in ``j``. Every slot, each
    observer rates the neighbours it interacted with, the count-weighted
    joint score per target is pushed into a ring buffer and the windowed
    mean becomes the target's trust for the next slot.
    """

    def __init__(self, n: int, *, lam: float = 0.9, eta: float = 3.0, window: int = 10, initial: float = 0.5):
        self.n = n
        self.lam, self.eta, self.window = lam, eta, window
        self.T = np.full((n, n), float(initial))
        self.counts = np.zeros((n, n))
        self._ring = np.zeros((window, n))
        self._seen = np.zeros((window, n), dtype=bool)
        self._pos = 0
        self._num = np.zeros(n)  # running sum of counts * T per target
        self._w = np.zeros(n)

    def update(self, good: np.ndarray, betrayal: np.ndarray) -> None:
        """Apply one slot of outcomes; ``good``/``betrayal`` are (observer, target) masks."""
        if (good & betrayal).any():
            raise ValueError("an interaction cannot be both good and a betrayal")
        obs, tgt = np.nonzero(good | betrayal)
        self.update_edges(obs, tgt, good[obs, tgt])

    def update_edges(self, obs: np.ndarray, tgt: np.ndarray, good: np.ndarray) -> None:
        """Sparse form of :meth:`update`: one entry per rated (observer, target) pair."""
        T_old = self.T[obs, tgt]
        c_old = self.counts[obs, tgt]
        T_new = np.where(good, self.lam * T_old + (1 - self.lam),
                         np.maximum(self.lam * T_old - (1 - self.lam) * self.eta, -1.0))
        self.T[obs, tgt] = T_new
        self.counts[obs, tgt] = c_old + 1
        self._num += np.bincount(tgt, weights=(c_old + 1) * T_new - c_old * T_old, minlength=self.n)
        self._w += np.bincount(tgt, minlength=self.n)
        seen = self._w > 0
        self._ring[self._pos] = np.divide(self._num, self._w, out=np.zeros(self.n), where=seen)
        self._seen[self._pos] = seen
        self._pos = (self._pos + 1) % self.window

    def seen(self) -> np.ndarray:
        """Targets rated at least once inside the window."""
        return self._seen.any(axis=0)

    def joint(self) -> np.ndarray:
        cnt = self._seen.sum(axis=0)
        return np.divide((self._ring * self._seen).sum(axis=0), cnt, out=np.zeros(self.n), where=cnt > 0)
