"""Stackelberg pursuit-evasion games by direct collocation with follower
necessary conditions, cross-validated by indirect shooting."""

from .collocation import (
    GAUSS_LOBATTO_5,
    HERMITE_SIMPSON,
    Mesh,
    TranscribedProblem,
    Trajectory,
    extract_trajectory,
    initial_guess,
    reintegrate,
)
from .config import RunConfig, load_config
from .game import GameParameters, SpacecraftGame
from .nlp import NLPProblem, SolverOptions, SolverResult, solve
from .shooting import IntegratorOptions, seed_from_trajectory, solve_tpbvp

__version__ = "0.1.0"

__all__ = [
    "GAUSS_LOBATTO_5",
    "HERMITE_SIMPSON",
    "IntegratorOptions",
    "Mesh",
    "NLPProblem",
    "GameParameters",
    "RunConfig",
    "SolverOptions",
    "SolverResult",
    "SpacecraftGame",
    "TranscribedProblem",
    "Trajectory",
    "extract_trajectory",
    "initial_guess",
    "load_config",
    "reintegrate",
    "seed_from_trajectory",
    "solve",
    "solve_tpbvp",
]
