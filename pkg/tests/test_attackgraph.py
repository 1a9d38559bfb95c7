import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agraph_util import branching, chain, diamond, instance, oracle_fls_firings, oracle_paths, random_instance
from swarmshield.attackgraph import default_rules
from swarmshield.attackgraph.datalog import Engine, fact, fixpoint, naive_fixpoint, parse_rules
from swarmshield.attackgraph.facts import compile_facts, parse_records, prune_links
from swarmshield.attackgraph.patching import apply_patches, prioritize_patches, score_vulns
from swarmshield.attackgraph.paths import (
    AttackPath,
    DeterministicBackend,
    NoisyBackend,
    Verdict,
    dedup_pd,
    enumerate_paths,
    explore_spe,
    trace_paths_pr,
    verify_path_rv,
    verify_steps_rv,
)
from swarmshield.baselines import fls_harden, gp_harden, sas_harden
from swarmshield.errors import CompilationRejected, ConfigError, RuleError

RULES = default_rules()
SEEDS = range(20)


# --- compilation ---------------------------------------------------------------


def test_duplicate_vuln_lines_collapse():
    text = "vuln v1 ssh 7.0 user root\nvuln v1 ssh 7.0 user root\n"
    fb = compile_facts("", text)
    assert len(fb.by_functor("vuln")) == 1
    assert fb.counts[fact("vuln", "v1", "ssh", "7.0", "user", "root")] == 2


def test_links_are_stored_once():
    fb = compile_facts("link 2 1\nlink 1 2\n", "")
    assert fb.by_functor("link") == [fact("link", "1", "2")]


def test_malformed_lines_are_reported_with_line_numbers():
    good = "".join(f"node {i}\n" for i in range(20))
    fb = compile_facts(good + "service x ssh 7.0\n", "")
    assert len(fb) == 20
    assert [(i.source, i.line_no) for i in fb.issues] == [("config", 21)]


def test_mostly_malformed_snapshot_rejected():
    with pytest.raises(CompilationRejected):
        compile_facts("node 1\nbogus 2\nlink 3\n", "")


def test_parse_records_keeps_duplicates():
    recs, issues, n = parse_records("node 1\nnode 1\n# comment\n\n", "")
    assert len(recs) == 2 and not issues and n == 2


def test_prune_links_preserves_derivations():
    for seed in SEEDS:
        facts = random_instance(seed)
        from swarmshield.attackgraph.facts import FactBase

        pruned = prune_links(FactBase(facts)).facts
        full = {f for f in fixpoint(facts, RULES).facts if f.functor in ("hasPriv", "compromised")}
        part = {f for f in fixpoint(pruned, RULES).facts if f.functor in ("hasPriv", "compromised")}
        assert full == part


# --- rules and fixpoint ----------------------------------------------------------


def test_rule_parser_numbers_rules():
    rules = parse_rules("p(X) :- q(X).\n% comment\nr(X) :- p(X), q(X).\n")
    assert [r.id for r in rules] == ["r1", "r2"]


@pytest.mark.parametrize("text", ["p(X) :- q(Y).", "p(X) q(X).", "p(X) :- q(X)", "p(X :- q(X)."])
def test_rule_parser_errors(text):
    with pytest.raises(RuleError):
        parse_rules(text)


@pytest.mark.parametrize("seed", SEEDS)
def test_semi_naive_equals_naive(seed):
    facts = random_instance(seed)
    assert fixpoint(facts, RULES).facts == naive_fixpoint(facts, RULES)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_incremental_updates_match_fresh_fixpoint(seed_a, seed_b):
    a, b = random_instance(seed_a), random_instance(seed_b)
    eng = Engine(RULES, a)
    eng.remove_facts(a - b)
    eng.add_facts(b - a)
    assert eng.result().facts == fixpoint(b, RULES).facts


def test_provenance_records_every_derived_fact():
    res = fixpoint(chain(3), RULES)
    assert set(res.provenance) == res.derived


# --- path reasoning ------------------------------------------------------------


def test_chain_has_single_three_hop_path():
    paths = enumerate_paths(chain(3), RULES)
    assert len(paths) == 1 and len(paths[0]) == 3


def test_diamond_has_two_paths():
    paths = enumerate_paths(diamond(), RULES)
    assert [p.steps for p in paths] == oracle_paths(diamond())
    assert len(paths) == 2


@pytest.mark.parametrize("seed", SEEDS)
def test_pipeline_equals_brute_force(seed):
    facts = random_instance(seed)
    assert [p.steps for p in enumerate_paths(facts, RULES)] == oracle_paths(facts)


@pytest.mark.parametrize("seed", SEEDS)
def test_pr_alone_is_complete(seed):
    facts = random_instance(seed)
    res = fixpoint(facts, RULES)
    assert [p.steps for p in trace_paths_pr(res, RULES)] == oracle_paths(facts)


def test_depth_cap_limits_length():
    paths = enumerate_paths(chain(5), RULES, depth_cap=4)
    assert paths == []


def test_path_must_chain():
    with pytest.raises(ValueError):
        AttackPath((("0", "user", "v", "1", "user"), ("2", "user", "v", "3", "user")))


# --- verification ----------------------------------------------------------------


def test_valid_path_accepted_and_fabricated_step_rejected():
    facts = chain(3)
    p = enumerate_paths(facts, RULES)[0]
    assert verify_path_rv(p, facts, RULES) is Verdict.VALID
    bad = list(p.steps)
    bad[1] = (bad[1][0], bad[1][1], "v_fake", bad[1][3], bad[1][4])
    assert verify_path_rv(AttackPath(tuple(bad)), facts, RULES) is Verdict.INVALID


def test_path_not_ending_at_asset_rejected():
    facts = chain(3)
    p = enumerate_paths(facts, RULES)[0]
    assert verify_path_rv(AttackPath(p.steps[:2]), facts, RULES) is Verdict.INVALID


def test_even_instance_count_rejected():
    facts = chain(2)
    p = enumerate_paths(facts, RULES)[0]
    with pytest.raises(ConfigError):
        verify_path_rv(p, facts, RULES, v_instances=4)


def test_majority_vote_error_within_binomial_bound():
    facts = chain(2)
    p = enumerate_paths(facts, RULES)[0]
    q, V, trials = 0.2, 5, 10_000
    backend = NoisyBackend(DeterministicBackend(facts, RULES), q)
    rng = np.random.default_rng(11)
    errors = sum(verify_path_rv(p, v_instances=V, backend=backend, rng=rng) is Verdict.INVALID
                 for _ in range(trials))
    bound = sum(math.comb(V, k) * q**k * (1 - q) ** (V - k) for k in range(V // 2 + 1, V + 1))
    sd = math.sqrt(bound * (1 - bound) / trials)
    assert errors / trials < 0.06
    assert errors / trials <= bound + 3 * sd


def test_step_vote_accepts_real_steps_and_rejects_fabricated():
    facts = diamond()
    backend = DeterministicBackend(facts, RULES)
    steps = sorted({st for p in enumerate_paths(facts, RULES) for st in p.steps})
    fake = ("0", "user", "vd", "3", "user")  # no link between 0 and 3
    verdicts = verify_steps_rv(steps + [fake], backend, 3)
    assert all(verdicts[st] for st in steps)
    assert verdicts[fake] is False


def test_step_vote_rejects_even_instances():
    with pytest.raises(ConfigError):
        verify_steps_rv([], DeterministicBackend(chain(2), RULES), 2)


# --- dedup and prefix exploration --------------------------------------------------


def test_rule_ids_do_not_split_paths():
    rules = parse_rules("""
        hasPriv(attacker, N, user) :- entry(N).
        hasPriv(A, N2, P2) :- hasPriv(A, N1, P1), link(N1, N2), service(N2, S, Ver), vuln(V, S, Ver, P1, P2).
        hasPriv(A, N2, P2) :- hasPriv(A, N1, P1), link(N1, N2), vuln(V, S, Ver, P1, P2), service(N2, S, Ver).
    """)
    facts = chain(2)
    raw = trace_paths_pr(fixpoint(facts, rules), rules)
    twins = [AttackPath(p.steps, ("r2", "r2")) for p in raw] + [AttackPath(p.steps, ("r3", "r3")) for p in raw]
    assert len(dedup_pd(twins)) == len(raw) == 1


def test_spe_recovers_withheld_diamond_path():
    facts = diamond()
    res = fixpoint(facts, RULES)
    full = trace_paths_pr(res, RULES)
    grown = explore_spe(full[:1], res, RULES)
    assert [p.steps for p in grown] == [p.steps for p in full]


def test_spe_from_nothing_finds_everything():
    facts = random_instance(3)
    res = fixpoint(facts, RULES)
    assert [p.steps for p in explore_spe([], res, RULES)] == oracle_paths(facts)


# --- patching -------------------------------------------------------------------


def test_closer_vuln_ranks_higher_on_equal_frequency():
    # two disjoint one-step paths; v_near lands 1 hop from the asset, v_far 3 hops
    facts = instance(
        [(0, 1), (1, 9), (0, 2), (2, 3), (3, 4), (4, 9)],
        {1: [("n", "1")], 2: [("f", "1")]},
        [("v_near", "n", "1", "user", "user"), ("v_far", "f", "1", "user", "user")],
        [0], [9])
    paths = [AttackPath((("0", "user", "v_near", "1", "user"),)), AttackPath((("0", "user", "v_far", "2", "user"),))]
    scores = score_vulns(paths, facts, rho=0.5)
    assert scores["v_near"] == pytest.approx(0.5 + 0.5 / 2)
    assert scores["v_far"] == pytest.approx(0.5 + 0.5 / 4)
    assert prioritize_patches(paths, facts, budget=1).vulns == ["v_near"]


def test_top_patch_removes_half_the_diamond():
    from swarmshield.attackgraph.facts import FactBase

    fb = FactBase(diamond())
    before = enumerate_paths(fb.facts, RULES)
    plan = prioritize_patches(before, fb, budget=1)
    after = enumerate_paths(apply_patches(fb, plan.vulns).facts, RULES)
    assert len(after) <= len(before) / 2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sets(st.sampled_from([f"v{k}" for k in range(5)])))
def test_patching_only_shrinks_path_set(seed, vids):
    from swarmshield.attackgraph.facts import FactBase

    fb = FactBase(random_instance(seed))
    before = {p.steps for p in enumerate_paths(fb.facts, RULES)}
    after = {p.steps for p in enumerate_paths(apply_patches(fb, vids).facts, RULES)}
    assert after <= before
    assert not any(s[2] in vids for p in after for s in p)


def test_budget_caps_plan():
    facts = random_instance(5)
    paths = enumerate_paths(facts, RULES)
    assert len(prioritize_patches(paths, facts, budget=2).vulns) <= 2


# --- hardening baselines ----------------------------------------------------------


def test_fls_depth_two_ladder_matches_brute_force_count():
    facts = chain(2)
    res = fls_harden(facts, RULES, depth_cap=2)
    assert res.firings == oracle_fls_firings(facts, depth_cap=2)
    assert res.firings < 10


def test_fls_counts_match_oracle_on_branching():
    facts = branching(4, 3)
    for d in range(1, 5):
        assert fls_harden(facts, RULES, depth_cap=d).firings == oracle_fls_firings(facts, depth_cap=d)


def test_fls_grows_geometrically_with_depth():
    facts = branching(6, 3)
    costs = [fls_harden(facts, RULES, depth_cap=d).overhead for d in range(2, 7)]
    ratios = [b / a for a, b in zip(costs, costs[1:])]
    assert min(ratios) >= 2.5, ratios


@pytest.mark.parametrize("seed", SEEDS)
def test_fls_path_set_equals_pipeline(seed):
    facts = random_instance(seed)
    assert [p.steps for p in fls_harden(facts, RULES).paths] == [p.steps for p in enumerate_paths(facts, RULES)]


def test_fls_truncates_at_cap():
    res = fls_harden(branching(6, 3), RULES, depth_cap=6, firing_cap=100)
    assert res.truncated


def test_duplicate_records_multiply_fls_firings():
    facts = chain(2)
    base = fls_harden(facts, RULES).firings
    counts = Counter({f: 1 for f in facts})
    counts[fact("vuln", "v2", "s2", "1", "user", "user")] = 2
    assert fls_harden(facts, RULES, multiplicity=counts).firings == base + 1


def test_sas_without_errors_is_single_pass_cost():
    facts = random_instance(4)
    res = sas_harden(facts, RULES, 0.0)
    fp = fixpoint(facts, RULES)
    n_paths = len(trace_paths_pr(fp, RULES))
    assert res.retries == 0
    assert res.overhead == fp.firings + 5 * n_paths


def test_sas_unit_multiplicity_changes_nothing():
    facts = random_instance(6)
    plain = sas_harden(facts, RULES, 0.0)
    assert sas_harden(facts, RULES, 0.0, multiplicity=Counter(facts)).overhead == plain.overhead


def test_sas_retries_are_charged_and_paths_stay_sound():
    facts = random_instance(3)
    rng = np.random.default_rng(0)
    res = sas_harden(facts, RULES, 0.2, rng)
    fp = fixpoint(facts, RULES)
    assert res.overhead == fp.firings + 5 * (len(res.paths) + res.retries)
    backend = DeterministicBackend(facts, RULES)
    assert all(backend.verdict(p) for p in res.paths)
    assert [p.steps for p in res.paths] == oracle_paths(facts)


def test_sas_rejects_bad_error_prob():
    with pytest.raises(ValueError):
        sas_harden(chain(2), RULES, 1.0, np.random.default_rng(0))


def test_gp_charges_fifty_per_new_vuln():
    assert gp_harden(["a", "b", "c"]).overhead >= 150
    assert gp_harden([]).overhead == 0
