"""Config, metrics CSV, simulator determinism, baseline CDI policies, CLI and plotting."""

import dataclasses
import json
import os
import re
import subprocess
import sys

import numpy as np
import pytest

from swarmshield import cli
from swarmshield.attackgraph import default_rules
from swarmshield.attackgraph.facts import compile_facts
from swarmshield.baselines import cos_policy, gp_harden, gs_policy, lfs_policy, sas_harden
from swarmshield.batch import run_batch
from swarmshield.config import AttackGraphConfig, ScenarioConfig, dump_config, load_config, parse_config
from swarmshield.errors import ConfigError, PlotError
from swarmshield.hardening import make_strategy
from swarmshield.metrics import COLUMNS, MetricsRow, parse_csv, read_csv, rows_to_csv
from swarmshield.plotting import render_svg, series_from_files
from swarmshield.sim import Simulation, run_simulation, window_mean

SMALL = """
[swarm]
n_uavs = 60
region = 150, 150, 50
duration = 6.0
[threat]
spoof_start = 1.0
spoof_end = 3.0
pen_start = 1.0
pen_end = 5.0
outdated_prob = 0.02
"""


@pytest.fixture(scope="module")
def small_ini(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.ini"
    p.write_text(SMALL)
    return p


@pytest.fixture(scope="module")
def small_cfg(small_ini):
    return load_config(small_ini)


@pytest.fixture(scope="module")
def small_runs(small_cfg):
    return {lab: run_simulation(small_cfg, lab, 2) for lab in ("proposed", "gs", "cos", "gp")}


# --- config ---

def test_config_roundtrip_and_defaults():
    cfg = ScenarioConfig()
    assert cfg.n_slots == 400
    again = parse_config(dump_config(cfg))
    assert again == cfg


@pytest.mark.parametrize("text", [
    "[nope]\nx = 1\n",
    "[swarm]\nbogus = 1\n",
    "[swarm]\nn_uavs = many\n",
    "[attack_graph]\nv_instances = 4\n",
    "[attack_graph]\nagent_capacity = -1\n",
    "[trust]\ntheta_lo = 0.95\n",
    "[swarm]\nr_comm = 80\n",
])
def test_config_rejects_bad_input(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


# --- metrics ---

def _row(t, **kw):
    base = dict(t=t, mean_cost=1.5, hardening_overhead=0.0, mean_cdi=0.1, victim_deviation=0.0,
                spoof_belief=0.01, joint_trust_min=0.5, paths_open=0, policy="proposed", seed=1)
    base.update(kw)
    return MetricsRow(**base)


def test_csv_roundtrip_is_exact():
    rows = [_row(0.1 * k, mean_cost=1 / 3 + k) for k in range(1, 6)]
    text = rows_to_csv(rows, ScenarioConfig())
    assert text.splitlines()[0].startswith("#")
    assert parse_csv(text) == rows
    header = [ln for ln in text.splitlines() if not ln.startswith("#")][0]
    assert header.split(",") == COLUMNS


@pytest.mark.parametrize("kw", [dict(mean_cost=float("nan")), dict(hardening_overhead=-1.0), dict(paths_open=-1)])
def test_metrics_row_rejects_bad_values(kw):
    with pytest.raises(ValueError):
        _row(0.1, **kw)


def test_window_mean_bounds():
    rows = [_row(0.5 * k, mean_cost=float(k)) for k in range(10)]
    assert window_mean(rows, "mean_cost", 1.0, 2.0) == pytest.approx(3.0)
    assert window_mean(rows, "mean_cost", 1.0, 2.0, closed=False) == pytest.approx(2.5)


# --- CDI baselines ---

def test_cos_lfs_arithmetic():
    assert np.all(cos_policy(np.array([0.0, 3.0, 40.0])) == 50.0)
    assert lfs_policy(0.0) == 0.0
    assert lfs_policy(10.0, gain=2.0) == 20.0
    assert lfs_policy(100.0) == 50.0
    with pytest.raises(ValueError):
        lfs_policy(1.0, gain=0.0)


def test_gs_quiescent_and_grid_minimiser():
    assert gs_policy(np.array([0.0]))[0] == 0.0
    s = np.array([0.0, 5.0, 20.0, 40.0])
    out = gs_policy(s)
    assert np.all(np.diff(out) >= 0)
    assert np.all((out >= 0) & (out <= 50))


def test_gs_lags_proposed_at_attack_onset(small_runs, small_cfg):
    dt = small_cfg.swarm.dt
    k0 = int(round(small_cfg.threat.spoof_start / dt))
    prop = np.array([r.mean_cdi for r in small_runs["proposed"]])
    gs = np.array([r.mean_cdi for r in small_runs["gs"]])
    level = 0.5 * prop[k0:].max()
    first = lambda x: int(np.argmax(x[k0:] >= level)) if (x[k0:] >= level).any() else len(x)  # noqa: E731
    assert first(gs) > first(prop)


# --- hardening strategies ---

def _facts():
    cfg_text = ("node 0\nnode 1\nnode 2\nlink 0 1\nlink 1 2\nservice 1 mavlink 1.0\nservice 2 meshd 1.1\n"
                "asset 2\nentry 0\n")
    vul = "vuln a mavlink 1.0 user root\nvuln b meshd 1.1 user root\n"
    return compile_facts(cfg_text, vul)


def test_gp_strategy_spikes_per_new_vuln():
    gp = make_strategy("gp", AttackGraphConfig(), default_rules())
    gp.on_snapshot(5, _facts())
    assert gp.charge(5) == 100.0
    gp.on_snapshot(6, _facts())
    assert gp.charge(6) == 0.0
    assert gp_harden({"x", "y", "z"}).overhead >= 150


def test_sas_error_free_is_deterministic():
    fb = _facts()
    a = sas_harden(fb.facts, default_rules(), 0.0, np.random.default_rng(0))
    b = sas_harden(fb.facts, default_rules(), 0.0, np.random.default_rng(99))
    assert a.overhead == b.overhead


def test_sas_errors_are_retried_never_accepted():
    fb = _facts()
    clean = sas_harden(fb.facts, default_rules(), 0.0, np.random.default_rng(0))
    noisy = sas_harden(fb.facts, default_rules(), 0.5, np.random.default_rng(0))
    assert {p.canonical for p in noisy.paths} == {p.canonical for p in clean.paths}
    assert noisy.overhead >= clean.overhead


def test_proposed_rollout_spreads_cost():
    cfg = AttackGraphConfig(rollout_slots=10, agent_capacity=0.0)
    st = make_strategy("proposed", cfg, default_rules(), np.random.default_rng(0))
    st.on_snapshot(0, _facts())
    charges = [st.charge(k) for k in range(12)]
    assert all(c > 0 for c in charges[:10]) and charges[10:] == [0.0, 0.0]
    assert len(set(round(c, 9) for c in charges[:10])) == 1


# --- simulator ---

def test_sim_rows_and_determinism(small_cfg, small_runs):
    rows = small_runs["proposed"]
    assert len(rows) == small_cfg.n_slots == 60
    t = [r.t for r in rows]
    assert all(a < b for a, b in zip(t, t[1:]))
    again = run_simulation(small_cfg, "proposed", 2)
    assert rows_to_csv(again, small_cfg) == rows_to_csv(rows, small_cfg)


def test_shared_attack_trace_across_policies(small_cfg):
    sims = [Simulation(small_cfg, pol, hard, seed=2) for pol, hard in
            [("proposed", "proposed"), ("cos", "proposed"), ("gs", "proposed"), ("proposed", "gp")]]
    ref = sims[0]
    for sim in sims[1:]:
        assert sim.victim == ref.victim
        assert [sim.spoof.bias_magnitude(t) for t in (1.0, 2.0, 3.0)] == \
            [ref.spoof.bias_magnitude(t) for t in (1.0, 2.0, 3.0)]
        assert sim.world.present == ref.world.present
        assert sim.world.disclosure_slot == ref.world.disclosure_slot
        assert sim.world.scenario.entry_nodes == ref.world.scenario.entry_nodes
        assert np.array_equal(sim.insider, ref.insider)


def test_cos_dominates_cost(small_runs):
    cos = [r.mean_cost for r in small_runs["cos"]]
    prop = [r.mean_cost for r in small_runs["proposed"]]
    assert np.mean(cos) > np.mean(prop)


def test_hardening_only_in_penetration_window(small_runs, small_cfg):
    th = small_cfg.threat
    for lab in ("proposed", "gp"):
        outside = [r.hardening_overhead for r in small_runs[lab] if r.t < th.pen_start - 1e-9]
        assert all(v == 0 for v in outside)
        assert window_mean(small_runs[lab], "hardening_overhead", th.pen_start, th.pen_end, closed=False) > 0


def test_unknown_label_rejected(small_cfg):
    with pytest.raises(ValueError):
        run_simulation(small_cfg, "bogus", 1)


def test_simulation_keeps_trace(small_cfg):
    sim = Simulation(small_cfg, "cos", "proposed", seed=1, keep_trace=True)
    sim.run()
    assert len(sim.traces) == small_cfg.n_slots
    assert sim.traces[0].cdi.shape == (60,)


# --- CLI ---

def test_cli_run_twice_identical(tmp_path, small_ini, capsys):
    out = tmp_path / "o"
    assert cli.main(["run", "--scenario", str(small_ini), "--policy", "cos", "--seed", "4", "--out", str(out)]) == 0
    first = (out / "cos_seed4.csv").read_bytes()
    assert cli.main(["run", "--scenario", str(small_ini), "--policy", "cos", "--seed", "4", "--out", str(out)]) == 0
    assert (out / "cos_seed4.csv").read_bytes() == first
    text = first.decode()
    assert "# [swarm]" in text and "# n_uavs = 60" in text
    assert len(read_csv(out / "cos_seed4.csv")) == 60


def test_csv_independent_of_hash_seed(tmp_path, small_ini):
    # set iteration order must not leak into firing counts or any other output
    outs = []
    for h in ("1", "2"):
        env = dict(os.environ, PYTHONHASHSEED=h)
        out = tmp_path / h
        subprocess.run([sys.executable, "-m", "swarmshield", "run", "--scenario", str(small_ini), "--policy", "proposed",
                        "--seed", "3", "--out", str(out)], check=True, env=env, capture_output=True)
        outs.append((out / "proposed_seed3.csv").read_bytes())
    assert outs[0] == outs[1]


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[swarm]\nn_uavs = lots\n")
    assert cli.main(["run", "--scenario", str(bad), "--out", str(tmp_path)]) == 2
    assert cli.main(["run", "--policy", "nope", "--scenario", str(bad), "--out", str(tmp_path)]) == 2
    assert cli.main(["bogus-command"]) == 2
    assert cli.main(["batch", "--policies", "cos", "--seeds", "5..1", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_simulation_fault_exit_3(tmp_path, small_ini, monkeypatch, capsys):
    def boom(self):
        raise FloatingPointError("overflow")
    monkeypatch.setattr(Simulation, "step", boom)
    assert cli.main(["run", "--scenario", str(small_ini), "--policy", "cos", "--out", str(tmp_path)]) == 3
    assert "fault at slot 0: overflow" in capsys.readouterr().err


def test_parse_seeds():
    assert cli.parse_seeds("1..3") == [1, 2, 3]
    assert cli.parse_seeds("4,9") == [4, 9]


def test_batch_counts_and_summary(tmp_path, small_cfg):
    labels = ["proposed", "cos", "lfs", "gs"]
    cfg = dataclasses.replace(small_cfg, swarm=dataclasses.replace(small_cfg.swarm, duration=3.0))
    summary = run_batch(cfg, labels, [1, 2, 3], tmp_path)
    assert len(list(tmp_path.glob("*.csv"))) == 12
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["flags"]["cost_order"]["order"] == "proposed < gs < lfs < cos"
    assert set(on_disk["runs"]) == set(labels)
    assert summary["windows"]["cost"] == [1.0, 3.0]
    with pytest.raises(ValueError):
        run_batch(cfg, labels, [], tmp_path)


def test_cli_trace(tmp_path, capsys):
    facts = tmp_path / "f.txt"
    facts.write_text("node 0\nnode 1\nlink 0 1\nservice 1 mavlink 1.0\nasset 1\nentry 0\n"
                     "vuln a mavlink 1.0 user root\n")
    assert cli.main(["trace", "--facts", str(facts), "--out", str(tmp_path / "t")]) == 0
    assert "1 path(s); plan: a" in capsys.readouterr().out
    assert (tmp_path / "t" / "patch_plan.txt").read_text().startswith("a ")


# --- plotting ---

def _write_run(path, policy, vals, dt=0.5):
    rows = [_row(dt * (k + 1), mean_cost=v, hardening_overhead=v, policy=policy) for k, v in enumerate(vals)]
    path.write_text(rows_to_csv(rows))
    return path


def test_plot_four_polylines_and_band(tmp_path):
    files = [_write_run(tmp_path / f"{p}.csv", p, [i + 1.0] * 12) for i, p in enumerate(["proposed", "gs", "lfs", "cos"])]
    svg = render_svg(series_from_files(files, "cost"), "cost")
    assert svg.count("<polyline") == 4
    assert svg.count('class="attack-window"') == 1
    x = [float(v) for v in re.search(r'class="attack-window" x="([\d.]+)" y="\d+" width="([\d.]+)"', svg).groups()]
    assert x[1] > 0
    assert "http://" not in svg.replace('xmlns="http://www.w3.org/2000/svg"', "")


def test_plot_overhead_band_and_single_series(tmp_path):
    f = _write_run(tmp_path / "a.csv", "gp", list(range(80)))
    svg = render_svg(series_from_files([f], "overhead"), "overhead")
    assert svg.count("<polyline") == 1 and 'class="attack-window"' in svg


def test_plot_rejects_mismatched_axes(tmp_path):
    a = _write_run(tmp_path / "a.csv", "x", [1.0] * 5)
    b = _write_run(tmp_path / "b.csv", "y", [1.0] * 6)
    with pytest.raises(PlotError, match="b.csv"):
        series_from_files([a, b], "cost")


def test_cli_plot_is_byte_identical(tmp_path, capsys):
    files = [str(_write_run(tmp_path / f"{p}.csv", p, [float(i)] * 10)) for i, p in enumerate("ab")]
    assert cli.main(["plot", "--kind", "cost", "--out", str(tmp_path / "a.svg"), *files]) == 0
    assert cli.main(["plot", "--kind", "cost", "--out", str(tmp_path / "b.svg"), *files]) == 0
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
