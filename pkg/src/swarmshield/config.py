"""Scenario configuration: nested dataclasses plus an INI-style reader/writer.

Files use ``key = value`` lines grouped under one ``[section]`` per subsystem.
Vector values are comma separated. Unknown keys are rejected so that typos do
not silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError

UNITS_HEADER = "lengths in meters, times in seconds, costs in model cost units"


@dataclass
class SwarmConfig:
    n_uavs: int = 500
    region: tuple[float, float, float] = (200.0, 200.0, 100.0)
    r_comm: float = 10.0
    r_sense: float = 50.0
    dt: float = 0.1
    duration: float = 40.0
    seed: int = 0
    insider_fraction: float = 0.2
    max_speed: float = 2.0
    waypoint_period: float = 10.0
    hover_power: float = 5.0
    tx_power_coeff: float = 0.002
    initial_energy: float = 50000.0


@dataclass
class ThreatConfig:
    spoof_start: float = 2.0
    spoof_end: float = 5.0
    drift_rate: float = 12.0
    drift_dir: tuple[float, float, float] = (1.0, 0.0, -1.0)
    stealth: str = "high"
    misreport_offset_scale: float = 20.0
    leak_probability: float = 0.3
    camouflage_slots: int = 20
    pen_start: float = 10.0
    pen_end: float = 30.0
    n_entry: int = 2
    n_assets: int = 3
    outdated_prob: float = 0.0075
    initial_disclosure: float = 0.25
    hop_period: float = 2.0
    snapshot_period: float = 1.0
    duplicate_scan_prob: float = 0.3


@dataclass
class PerceptionConfig:
    sigma_range: float = 0.1
    kappa0: float = 1.0
    sigma_k: float = 0.5
    trigger: float = 0.5
    anchor_cutoff: float = 0.4
    anchor_cap: int = 8
    max_condition: float = 1e6


@dataclass
class GameConfig:
    gamma: float = 0.4
    sigma: float = 0.5
    c_lat: float = 0.02
    c_en: float = 0.005
    c_risk: float = 0.1
    c_cong: float = 0.01
    alpha: float = 1.0
    beta: float = 5.0
    s_max: float = 30.0
    ns: int = 61
    t_h: float = 2.0
    nt: int = 41
    a_low: float = 6.0
    a_high: float = 12.0
    p_grid: tuple[float, ...] = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0)
    defense_cost_weight: float = 0.2
    rho_min: float = 0.02
    rho_max: float = 0.2
    likelihood_floor: float = 0.3
    likelihood_gain: float = 0.1
    likelihood_sigma: float = 0.4
    fp_iters: int = 2000
    fp_eps: float = 1e-4
    mfg_iters: int = 20
    damping: float = 1.0
    mfg_tol: float = 1e-4


@dataclass
class TrustConfig:
    theta_hi: float = 0.9
    theta_lo: float = 0.2
    lam: float = 0.9
    eta: float = 3.0
    window: int = 10
    initial_trust: float = 0.5
    type_prior: float = 0.95
    anchor_floor: float = 0.7
    residual_floor: float = 0.3
    betrayal_sigmas: float = 3.0
    probe_ratio: float = 0.2
    task_period: int = 10
    conserve_factor: float = 0.6
    stop_short: float = 4.0
    delay_noise: float = 0.1
    accuracy_noise: float = 1.0
    probe_distance: float = 60.0
    probe_speed: float = 10.0


@dataclass
class AttackGraphConfig:
    depth_cap: int = 8
    patch_budget: int = 2
    proximity_weight: float = 0.5
    firing_cost: float = 1.0
    verify_cost: float = 5.0
    patch_cost: float = 50.0
    v_instances: int = 3
    sas_error_prob: float = 0.2
    rollout_slots: int = 10
    agent_capacity: float = 10.0  # units per slot the agent pool can absorb
    fls_firing_cap: int = 20000


@dataclass
class BaselineConfig:
    lfs_gain: float = 2.0
    gs_grid_step: float = 1.0


@dataclass
class ScenarioConfig:
    swarm: SwarmConfig = field(default_factory=SwarmConfig)
    threat: ThreatConfig = field(default_factory=ThreatConfig)
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    game: GameConfig = field(default_factory=GameConfig)
    trust: TrustConfig = field(default_factory=TrustConfig)
    attack_graph: AttackGraphConfig = field(default_factory=AttackGraphConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)

    @property
    def n_slots(self) -> int:
        return int(round(self.swarm.duration / self.swarm.dt))

    def validate(self) -> None:
        s = self.swarm
        if s.n_uavs < 1:
            raise ConfigError("n_uavs must be >= 1")
        if s.dt <= 0:
            raise ConfigError("dt must be positive")
        if s.duration < s.dt:
            raise ConfigError("duration must be >= dt")
        if not 0.0 <= s.insider_fraction <= 1.0:
            raise ConfigError("insider_fraction must lie in [0, 1]")
        if min(s.region) <= 0:
            raise ConfigError("region must have positive volume")
        if s.r_comm > s.r_sense:
            raise ConfigError("r_comm must not exceed r_sense")
        t = self.trust
        if not 0.0 <= t.theta_lo < t.theta_hi <= 1.0:
            raise ConfigError("trust thresholds must satisfy 0 <= lo < hi <= 1")
        if self.attack_graph.v_instances % 2 == 0:
            raise ConfigError("v_instances must be odd")
        if self.attack_graph.agent_capacity < 0:
            raise ConfigError("agent_capacity must be non-negative")
        if not 0.0 < self.game.damping <= 1.0:
            raise ConfigError("damping must lie in (0, 1]")
        if self.threat.spoof_start >= self.threat.spoof_end:
            raise ConfigError("spoof window must satisfy start < end")
        if self.threat.stealth not in ("off", "low", "high"):
            raise ConfigError(f"unknown stealth level {self.threat.stealth!r}")


SECTIONS = {
    "swarm": SwarmConfig,
    "threat": ThreatConfig,
    "perception": PerceptionConfig,
    "game": GameConfig,
    "trust": TrustConfig,
    "attack_graph": AttackGraphConfig,
    "baselines": BaselineConfig,
}


def _coerce(raw: str, default: Any, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = ScenarioConfig()
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        sub = getattr(cfg, name)
        known = {f.name for f in dataclasses.fields(sub)}
        for key, raw in parser.items(name):
            if key not in known:
                raise ConfigError(f"unknown key {name}.{key}")
            setattr(sub, key, _coerce(raw, getattr(sub, key), f"{name}.{key}"))
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> ScenarioConfig:
    if path is None:
        cfg = ScenarioConfig()
        cfg.validate()
        return cfg
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text)


def _fmt(value: Any) -> str:
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: ScenarioConfig) -> str:
    """Render the fully resolved config back into the file format."""
    lines = [f"# {UNITS_HEADER}"]
    for name in SECTIONS:
        lines.append(f"[{name}]")
        sub = getattr(cfg, name)
        for f in dataclasses.fields(sub):
            lines.append(f"{f.name} = {_fmt(getattr(sub, f.name))}")
    return "\n".join(lines) + "\n"


def with_seed(cfg: ScenarioConfig, seed: int) -> ScenarioConfig:
    new = dataclasses.replace(cfg, swarm=dataclasses.replace(cfg.swarm, seed=int(seed)))
    return new
