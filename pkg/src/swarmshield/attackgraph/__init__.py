from importlib import resources

from .datalog import AtomicFact, Engine, FixpointResult, HornRule, fact, fixpoint, naive_fixpoint, parse_rules
from .facts import FactBase, compile_facts
from .patching import PatchPlan, apply_patches, prioritize_patches
from .paths import (AttackPath, DeterministicBackend, NoisyBackend, Verdict, dedup_pd, enumerate_paths,
                    explore_spe, trace_paths_pr, verify_path_rv)


def default_rules_text() -> str:
    return resources.files(__package__).joinpath("default_rules.dl").read_text()


def default_rules() -> list[HornRule]:
    return parse_rules(default_rules_text())


__all__ = [
    "AtomicFact", "Engine", "FixpointResult", "HornRule", "fact", "fixpoint", "naive_fixpoint", "parse_rules",
    "FactBase", "compile_facts", "PatchPlan", "apply_patches", "prioritize_patches", "AttackPath",
    "DeterministicBackend", "NoisyBackend", "Verdict", "dedup_pd", "enumerate_paths", "explore_spe",
    "trace_paths_pr", "verify_path_rv", "default_rules", "default_rules_text",
]
