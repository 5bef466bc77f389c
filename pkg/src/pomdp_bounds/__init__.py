"""Informed upper bounds for POMDPs and a point-based solver that uses them."""

from .bounds import BOUND_KINDS, BoundChain, BoundConfig, QTable, query_bound, query_q, table_value
from .core import Belief, ModelError, PomdpModel, belief_update
from .envs import make_env
from .estimators import InformedBound, PointBasedSolver
from .pomdp_file import PomdpParseError, load_pomdp, parse_pomdp, save_pomdp, write_pomdp
from .solver import SolveReport, SolverConfig, solve

__version__ = "0.1.0"

__all__ = [
    "BOUND_KINDS", "Belief", "BoundChain", "BoundConfig", "InformedBound", "ModelError", "PointBasedSolver",
    "PomdpModel", "PomdpParseError", "QTable", "SolveReport", "SolverConfig", "belief_update", "load_pomdp",
    "make_env", "parse_pomdp", "query_bound", "query_q", "save_pomdp", "solve", "table_value", "write_pomdp",
]
