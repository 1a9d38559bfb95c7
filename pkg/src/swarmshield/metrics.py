"""Per-slot metric rows and their CSV form."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass
from pathlib import Path

from .config import UNITS_HEADER, ScenarioConfig, dump_config


@dataclass(frozen=True)
class MetricsRow:
    t: float
    mean_cost: float
    hardening_overhead: float
    mean_cdi: float
    victim_deviation: float
    spoof_belief: float
    joint_trust_min: float
    paths_open: int
    policy: str
    seed: int

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError(f"{f.name} is not finite: {v!r}")
        if self.hardening_overhead < 0 or self.paths_open < 0:
            raise ValueError("overhead and path counts cannot be negative")


COLUMNS = [f.name for f in dataclasses.fields(MetricsRow)]
_TYPES = {f.name: f.type for f in dataclasses.fields(MetricsRow)}


def _cell(v) -> str:
    # repr round-trips floats exactly
    return repr(v) if isinstance(v, float) else str(v)


def rows_to_csv(rows, cfg: ScenarioConfig | None = None) -> str:
    buf = io.StringIO()
    if cfg is None:
        buf.write(f"# {UNITS_HEADER}\n")
    else:
        for line in dump_config(cfg).splitlines():
            buf.write(line + "\n" if line.startswith("#") else f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_cell(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def write_csv(path, rows, cfg: ScenarioConfig | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows, cfg))
    return path


def _convert(name: str, raw: str):
    kind = _TYPES[name]
    if kind in ("float", float):
        return float(raw)
    if kind in ("int", int):
        return int(raw)
    return raw


def parse_csv(text: str) -> list[MetricsRow]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header != COLUMNS:
        raise ValueError(f"unexpected header {header!r}")
    return [MetricsRow(**{c: _convert(c, v) for c, v in zip(COLUMNS, rec)}) for rec in reader]


def read_csv(path) -> list[MetricsRow]:
    return parse_csv(Path(path).read_text())


def column(rows, name: str) -> list:
    return [getattr(r, name) for r in rows]
