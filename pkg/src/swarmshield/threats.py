"""Attack injection: GPS spoofing, insider misreporting and multi-hop penetration."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .swarm import Role, SwarmTopology, UavState


class Stealth(enum.Enum):
    OFF = "off"
    LOW = "low"
    HIGH = "high"

    @property
    def scale(self) -> float:
        return {"off": 0.0, "low": 0.5, "high": 1.0}[self.value]


@dataclass
class SpoofAttack:
    victim: int
    t_start: float
    t_end: float
    drift_rate: float
    drift_dir: np.ndarray
    stealth_level: Stealth = Stealth.HIGH

    def __post_init__(self):
        d = np.asarray(self.drift_dir, dtype=float)
        norm = np.linalg.norm(d)
        if norm == 0:
            raise ValueError("drift_dir must be non-zero")
        self.drift_dir = d / norm
        if not self.t_start < self.t_end:
            raise ValueError("t_start must precede t_end")
        if self.drift_rate < 0:
            raise ValueError("drift_rate must be non-negative")

    def bias_magnitude(self, t: float) -> float:
        if t < self.t_start or t > self.t_end:
            return 0.0
        return self.stealth_level.scale * self.drift_rate * (t - self.t_start)

    def bias(self, t: float) -> np.ndarray:
        return self.bias_magnitude(t) * self.drift_dir


def apply_spoof(attack: SpoofAttack, t: float, victim_true_pos) -> np.ndarray:
    """GPS fix the victim sees at time ``t``: truth plus a linearly growing bias."""
    return np.asarray(victim_true_pos, dtype=float) + attack.bias(t)


def select_edge_victim(topology: SwarmTopology) -> int:
    """The UAV with the fewest sense neighbours; ties go to the lowest id."""
    deg = topology.sense_degree()
    return int(np.argmin(deg))


@dataclass
class InsiderPolicy:
    misreport_offset_scale: float = 20.0
    leak_probability: float = 0.3
    camouflage_slots: int = 20

    def __post_init__(self):
        if self.misreport_offset_scale < 0 or self.leak_probability < 0 or self.camouflage_slots < 0:
            raise ValueError("insider policy fields must be non-negative")
        if self.leak_probability > 1:
            raise ValueError("leak_probability must be <= 1")


def misreport_offsets(n: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """``n`` offsets with uniform direction and magnitude in (0, scale]."""
    direction = rng.normal(size=(n, 3))
    norms = np.linalg.norm(direction, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    magnitude = scale * (1.0 - rng.uniform(size=(n, 1)))
    return direction / norms * magnitude


def insider_misreport(policy: InsiderPolicy, uav: UavState, slot: int, rng: np.random.Generator) -> np.ndarray:
    if uav.role is not Role.INSIDER:
        raise ContractViolation(f"UAV {uav.id} is not an insider")
    offset = misreport_offsets(1, policy.misreport_offset_scale, rng)[0]
    if slot < policy.camouflage_slots or policy.misreport_offset_scale == 0:
        return np.asarray(uav.pos_gps, dtype=float).copy()
    return np.asarray(uav.pos_gps, dtype=float) + offset


# --- multi-hop penetration -------------------------------------------------

PRIVILEGES = ("none", "user", "root")
SERVICES = ("mavlink", "telemetry", "videolink", "meshd")
CURRENT_VERSION = "2.0"
OUTDATED_VERSIONS = ("1.0", "1.1", "1.2")

# three exploit types per service, (pre, post) privilege pairs
_VULN_TYPES = {
    "mavlink": (("user", "user"), ("user", "root"), ("root", "root")),
    "telemetry": (("user", "user"), ("root", "user"), ("user", "root")),
    "videolink": (("user", "user"), ("root", "root"), ("user", "root")),
    "meshd": (("user", "root"), ("user", "user"), ("root", "user")),
}


@dataclass(frozen=True)
class VulnRecord:
    vid: str
    service: str
    version: str
    pre_priv: str
    post_priv: str

    def line(self) -> str:
        return f"vuln {self.vid} {self.service} {self.version} {self.pre_priv} {self.post_priv}"


def default_vuln_catalog() -> list[VulnRecord]:
    """12 exploit types over 4 services, each instantiated per outdated version."""
    records = []
    t = 0
    for service in SERVICES:
        for pre, post in _VULN_TYPES[service]:
            t += 1
            for k, version in enumerate(OUTDATED_VERSIONS):
                records.append(VulnRecord(f"t{t:02d}{'abc'[k]}", service, version, pre, post))
    return records


def assign_services(n: int, outdated_prob: float, rng: np.random.Generator) -> dict[int, list[tuple[str, str]]]:
    """Every UAV runs all services; each is outdated with ``outdated_prob``."""
    outdated = rng.uniform(size=(n, len(SERVICES))) < outdated_prob
    which = rng.integers(0, len(OUTDATED_VERSIONS), size=(n, len(SERVICES)))
    services = {}
    for i in range(n):
        services[i] = [
            (name, OUTDATED_VERSIONS[which[i, s]] if outdated[i, s] else CURRENT_VERSION)
            for s, name in enumerate(SERVICES)
        ]
    return services


@dataclass
class PenetrationScenario:
    t_start: float
    t_end: float
    entry_nodes: list[int]
    vuln_catalog: list[VulnRecord]
    critical_assets: list[int]
    services: dict[int, list[tuple[str, str]]] = field(default_factory=dict)

    def __post_init__(self):
        if set(self.entry_nodes) & set(self.critical_assets):
            raise ValueError("entry nodes and critical assets must be disjoint")
        if self.services:
            running = {name for svc in self.services.values() for name, _ in svc}
            for v in self.vuln_catalog:
                if v.service not in running:
                    raise ValueError(f"vulnerability {v.vid} targets unused service {v.service}")

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_end

    def vulnerable_nodes(self, vulns=None) -> set[int]:
        vulns = self.vuln_catalog if vulns is None else vulns
        keys = {(v.service, v.version) for v in vulns}
        return {n for n, svc in self.services.items() if any(s in keys for s in svc)}


def emit_network_snapshot(
    scenario: PenetrationScenario,
    topology: SwarmTopology,
    *,
    disclosed=None,
    footholds=None,
    insiders=(),
    leak_probability: float = 0.0,
    duplicate_prob: float = 0.0,
    duplicate_vids=(),
    rng: np.random.Generator | None = None,
) -> tuple[str, str]:
    """Render the raw configuration and vulnerability-scan text.

    Links are the line-of-sight (sense) edges. Scan redundancy comes from
    ``duplicate_vids`` (always repeated) and ``duplicate_prob`` (seeded).
    Each insider whose leak draw fires repeats its true service lines.
    """
    if topology.sense.shape[0] == 0:
        raise ValueError("topology is empty")
    rng = rng if rng is not None else np.random.default_rng(0)
    n = topology.sense.shape[0]
    disclosed = scenario.vuln_catalog if disclosed is None else disclosed
    footholds = scenario.entry_nodes if footholds is None else footholds

    cfg = ["# network configuration snapshot"]
    cfg.extend(f"node {i}" for i in range(n))
    ii, jj = np.nonzero(np.triu(topology.sense, 1))
    cfg.extend(f"link {a} {b}" for a, b in zip(ii.tolist(), jj.tolist()))
    for i in range(n):
        for name, version in scenario.services.get(i, ()):
            cfg.append(f"service {i} {name} {version}")
    leaks = rng.uniform(size=len(insiders)) < leak_probability if len(insiders) else []
    for node, leaked in zip(insiders, leaks):
        if leaked:
            for name, version in scenario.services.get(int(node), ()):
                cfg.append(f"service {int(node)} {name} {version}")
    cfg.extend(f"asset {a}" for a in scenario.critical_assets)
    cfg.extend(f"entry {e}" for e in sorted(footholds))

    vul = ["# vulnerability scan report"]
    dup_draws = rng.uniform(size=len(disclosed)) < duplicate_prob if len(disclosed) else []
    dup_set = set(duplicate_vids)
    for rec, dup in zip(disclosed, dup_draws):
        vul.append(rec.line())
        if dup or rec.vid in dup_set:
            vul.append(rec.line())
    return "\n".join(cfg) + "\n", "\n".join(vul) + "\n"
