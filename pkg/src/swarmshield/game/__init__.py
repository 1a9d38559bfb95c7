from .belief import AttackerBelief, ResidualLikelihood, update_belief
from .fictitious import OuterGame, attacker_utility, build_outer_game, fictitious_play
from .mfg import MfgGrid, MfgParams, solve_fpk, solve_hjb, solve_mfg
from .mpc import MpcController, mpc_step
from .thomas import Tridiagonal, thomas_solve

__all__ = [
    "AttackerBelief", "ResidualLikelihood", "update_belief", "OuterGame", "attacker_utility",
    "build_outer_game", "fictitious_play", "MfgGrid", "MfgParams", "solve_fpk", "solve_hjb",
    "solve_mfg", "MpcController", "mpc_step", "Tridiagonal", "thomas_solve",
]
