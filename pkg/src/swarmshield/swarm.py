"""UAV entities, 3-D deployment and the range-based link topology."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .config import ScenarioConfig
from .errors import ConfigError


class Role(enum.Enum):
    LEGITIMATE = "legitimate"
    INSIDER = "insider"


@dataclass
class UavState:
    id: int
    pos_true: np.ndarray
    pos_gps: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    role: Role = Role.LEGITIMATE
    energy: float = 0.0
    cdi: float = 0.0
    admitted: bool = True

    @property
    def is_insider(self) -> bool:
        return self.role is Role.INSIDER


def deploy_ppp(config: ScenarioConfig, rng: np.random.Generator | None = None) -> list[UavState]:
    """Place ``n_uavs`` UAVs uniformly in the region and draw the insider set.

    A Poisson point process conditioned on its count is i.i.d. uniform, so the
    fixed fleet size is honoured exactly. Insiders are a seeded sample of
    ``floor(insider_fraction * n_uavs)`` ids.
    """
    sw = config.swarm
    region = np.asarray(sw.region, dtype=float)
    if region.shape != (3,) or np.prod(region) <= 0:
        raise ConfigError("deployment region has zero volume")
    if rng is None:
        rng = np.random.default_rng(sw.seed)
    pos = rng.uniform(0.0, 1.0, size=(sw.n_uavs, 3)) * region
    n_ins = int(np.floor(sw.insider_fraction * sw.n_uavs))
    insiders = set(rng.choice(sw.n_uavs, size=n_ins, replace=False).tolist()) if n_ins else set()
    return [
        UavState(
            id=i,
            pos_true=pos[i].copy(),
            pos_gps=pos[i].copy(),
            role=Role.INSIDER if i in insiders else Role.LEGITIMATE,
            energy=sw.initial_energy,
        )
        for i in range(sw.n_uavs)
    ]


def pairwise_distances(pos: np.ndarray) -> np.ndarray:
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


@dataclass
class SwarmTopology:
    """Link structure at one slot, backed by boolean adjacency matrices."""

    comm: np.ndarray
    sense: np.ndarray
    epoch: int = 0

    @staticmethod
    def _edges(adj: np.ndarray) -> set[tuple[int, int]]:
        i, j = np.nonzero(np.triu(adj, 1))
        return set(zip(i.tolist(), j.tolist()))

    @cached_property
    def comm_edges(self) -> set[tuple[int, int]]:
        return self._edges(self.comm)

    @cached_property
    def sense_edges(self) -> set[tuple[int, int]]:
        return self._edges(self.sense)

    def sense_degree(self) -> np.ndarray:
        return self.sense.sum(axis=1)

    def neighbors(self, uav: int, *, sense: bool = True) -> np.ndarray:
        adj = self.sense if sense else self.comm
        return np.flatnonzero(adj[uav])


def topology_from_distances(dist: np.ndarray, r_comm: float, r_sense: float, epoch: int = 0) -> SwarmTopology:
    off_diag = ~np.eye(dist.shape[0], dtype=bool)
    # boundary distance counts as connected
    return SwarmTopology(comm=(dist <= r_comm) & off_diag, sense=(dist <= r_sense) & off_diag, epoch=epoch)


def update_topology(uavs, r_comm: float, r_sense: float, epoch: int = 0) -> SwarmTopology:
    """Build comm/sense links from TRUE positions.

    ``uavs`` is a list of :class:`UavState` or an ``(n, 3)`` position array.
    """
    if isinstance(uavs, np.ndarray):
        pos = uavs
    else:
        pos = np.array([u.pos_true for u in uavs], dtype=float).reshape(-1, 3)
    if not np.all(np.isfinite(pos)):
        raise ValueError("non-finite UAV position")
    if len(pos) == 0:
        empty = np.zeros((0, 0), dtype=bool)
        return SwarmTopology(comm=empty, sense=empty, epoch=epoch)
    return topology_from_distances(pairwise_distances(pos), r_comm, r_sense, epoch)
