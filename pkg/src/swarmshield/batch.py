"""Cross-product batch runs with a summary of the window means and ordering checks."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ScenarioConfig, with_seed
from .errors import SwarmShieldError
from .metrics import write_csv
from .sim import RUN_LABELS, run_simulation, window_mean

COST_ORDER = ("proposed", "gs", "lfs", "cos")
OVERHEAD_RIVALS = ("fls", "sas", "gp")


class BatchError(SwarmShieldError):
    def __init__(self, label: str, seed: int, cause: Exception):
        super().__init__(f"run ({label}, seed {seed}) failed: {cause}")
        self.label, self.seed, self.cause = label, seed, cause


def csv_name(label: str, seed: int) -> str:
    return f"{label}_seed{seed}.csv"


def _one(args):
    cfg, label, seed, out_dir = args
    try:
        rows = run_simulation(cfg, label, seed)
    except Exception as exc:  # noqa: BLE001 - re-raised with the run named
        raise BatchError(label, seed, exc) from exc
    write_csv(Path(out_dir) / csv_name(label, seed), rows, with_seed(cfg, seed))
    th = cfg.threat
    return label, seed, {
        "cost_window_mean": window_mean(rows, "mean_cost", th.spoof_start, th.spoof_end),
        "overhead_window_mean": window_mean(rows, "hardening_overhead", th.pen_start, th.pen_end, closed=False),
    }


def _strictly_increasing(vals) -> bool:
    return all(a < b for a, b in zip(vals, vals[1:]))


def ordering_flags(per_run: dict) -> dict:
    """Per-seed ordering checks over whichever labels were run."""
    seeds = sorted({s for (_, s) in per_run})
    labels = {lab for (lab, _) in per_run}
    flags = {}
    chain = [lab for lab in COST_ORDER if lab in labels]
    if len(chain) >= 2:
        flags["cost_order"] = {
            "order": " < ".join(chain),
            "per_seed": {str(s): _strictly_increasing([per_run[(lab, s)]["cost_window_mean"] for lab in chain])
                         for s in seeds},
        }
    rivals = [lab for lab in OVERHEAD_RIVALS if lab in labels]
    if "proposed" in labels and rivals:
        flags["overhead_order"] = {
            "order": f"proposed < min({', '.join(rivals)})",
            "per_seed": {str(s): per_run[("proposed", s)]["overhead_window_mean"]
                         < min(per_run[(r, s)]["overhead_window_mean"] for r in rivals) for s in seeds},
        }
    for f in flags.values():
        f["pass"] = all(f["per_seed"].values())
    return flags


def run_batch(cfg: ScenarioConfig, labels, seeds, out_dir, *, jobs: int = 1) -> dict:
    labels = [lab.lower() for lab in labels]
    seeds = [int(s) for s in seeds]
    if not labels:
        raise ValueError("at least one policy is required")
    if not seeds:
        raise ValueError("at least one seed is required")
    for lab in labels:
        if lab not in RUN_LABELS:
            raise ValueError(f"unknown policy {lab!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, lab, s, str(out_dir)) for s in seeds for lab in labels]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one, tasks))
    else:
        results = [_one(t) for t in tasks]
    per_run = {(lab, s): m for lab, s, m in results}
    summary = {
        "policies": labels,
        "seeds": seeds,
        "windows": {"cost": [cfg.threat.spoof_start, cfg.threat.spoof_end],
                    "overhead": [cfg.threat.pen_start, cfg.threat.pen_end]},
        "runs": {lab: {str(s): per_run[(lab, s)] for s in seeds} for lab in labels},
        "mean": {lab: {k: _mean([per_run[(lab, s)][k] for s in seeds])
                       for k in ("cost_window_mean", "overhead_window_mean")} for lab in labels},
        "flags": ordering_flags(per_run),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def _mean(vals) -> float:
    vals = [v for v in vals if not math.isnan(v)]
    return sum(vals) / len(vals) if vals else math.nan
