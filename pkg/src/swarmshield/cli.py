"""Command line: run, batch, trace and plot.

Exit codes: 0 success, 2 configuration or usage error, 3 simulation fault.
Log verbosity comes from ``SWARMSHIELD_LOG`` (e.g. ``DEBUG``, ``INFO``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .errors import CompilationRejected, ConfigError, PlotError, RuleError, SimulationFault

EXIT_OK, EXIT_CONFIG, EXIT_FAULT = 0, 2, 3


def parse_seeds(text: str) -> list[int]:
    """``"1..5"`` (inclusive) or ``"1,4,9"``."""
    text = text.strip()
    if not text:
        raise argparse.ArgumentTypeError("empty seed list")
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
            return list(range(lo, hi + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _csv_list(text: str) -> list[str]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise argparse.ArgumentTypeError("empty list")
    return items


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swarmshield", description="UAV swarm security simulator")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="simulate one (policy, seed) and write its CSV")
    r.add_argument("--scenario", help="scenario config file (defaults built in when omitted)")
    r.add_argument("--policy", default="proposed", help="proposed, cos, lfs, gs, fls, sas or gp")
    r.add_argument("--hardening", help="override the hardening strategy: proposed, fls, sas, gp")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True, help="output directory")

    b = sub.add_parser("batch", help="run the policy x seed cross product")
    b.add_argument("--scenario")
    b.add_argument("--policies", type=_csv_list, required=True)
    b.add_argument("--seeds", type=parse_seeds, required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--jobs", type=int, default=1)

    t = sub.add_parser("trace", help="attack paths and a patch plan for a fact file")
    t.add_argument("--facts", required=True, help="config/scan records, one per line")
    t.add_argument("--vulns", help="separate scan report (optional)")
    t.add_argument("--rules", help="Horn rule file (default rule set when omitted)")
    t.add_argument("--out", required=True)
    t.add_argument("--depth-cap", type=int, default=8)
    t.add_argument("--budget", type=int, default=2)

    pl = sub.add_parser("plot", help="SVG of cost or overhead traces")
    pl.add_argument("--kind", choices=["cost", "overhead"], required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--log-y", action="store_true")
    pl.add_argument("csv", nargs="+")
    return p


def _config(path):
    from .config import ScenarioConfig, load_config

    cfg = load_config(path) if path else ScenarioConfig()
    cfg.validate()
    return cfg


def cmd_run(args) -> int:
    from .baselines import HardeningKind
    from .config import with_seed
    from .metrics import write_csv
    from .sim import Simulation, resolve_label

    cfg = _config(args.scenario)
    try:
        policy, hardening = resolve_label(args.policy)
        if args.hardening:
            hardening = HardeningKind(args.hardening.lower())
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    label = args.policy.lower() if not args.hardening else f"{policy.value}+{hardening.value}"
    sim = Simulation(cfg, policy, hardening, seed=args.seed, label=label)
    rows = sim.run()
    path = write_csv(Path(args.out) / f"{label}_seed{args.seed}.csv", rows, with_seed(cfg, args.seed))
    print(path)
    return EXIT_OK


def cmd_batch(args) -> int:
    from .batch import BatchError, run_batch

    cfg = _config(args.scenario)
    try:
        summary = run_batch(cfg, args.policies, args.seeds, args.out, jobs=args.jobs)
    except BatchError as exc:
        if isinstance(exc.cause, SimulationFault):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAULT
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for name, f in summary["flags"].items():
        print(f"{name}: {f['order']}: {'PASS' if f['pass'] else 'FAIL'}")
    print(Path(args.out) / "summary.json")
    return EXIT_OK


def cmd_trace(args) -> int:
    from .attackgraph import default_rules, parse_rules
    from .attackgraph.facts import compile_facts
    from .attackgraph.patching import prioritize_patches
    from .attackgraph.paths import enumerate_paths

    facts_text = Path(args.facts).read_text()
    vuln_text = Path(args.vulns).read_text() if args.vulns else ""
    rules = parse_rules(Path(args.rules).read_text()) if args.rules else default_rules()
    fb = compile_facts(facts_text, vuln_text)
    for issue in fb.issues:
        logging.getLogger("swarmshield").warning("%s:%d: %s", issue.source, issue.line_no, issue.reason)
    paths = enumerate_paths(fb.facts, rules, depth_cap=args.depth_cap)
    plan = prioritize_patches(paths, fb, args.budget)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "paths.txt").write_text("".join(p.canonical + "\n" for p in paths))
    (out / "patch_plan.txt").write_text("".join(f"{v} {s!r}\n" for v, s in plan.items))
    print(f"{len(paths)} path(s); plan: {' '.join(plan.vulns) or '(empty)'}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot

    print(plot(args.csv, args.kind, args.out, log_y=args.log_y))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "batch": cmd_batch, "trace": cmd_trace, "plot": cmd_plot}


def main(argv=None) -> int:
    level = os.environ.get("SWARMSHIELD_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    try:
        return COMMANDS[args.cmd](args)
    except SimulationFault as exc:
        print(f"simulation fault at {exc}", file=sys.stderr)
        return EXIT_FAULT
    except (ConfigError, RuleError, CompilationRejected, PlotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
