"""Block eigensolvers with the shrink-and-expand technique."""

from .matio import SparseSym, from_generator_spec, read_matrix_market
from .solvers import SolverConfig, solve
from .strategy import StrategyConfig

__version__ = "0.1.0"

__all__ = [
    "SparseSym",
    "SolverConfig",
    "StrategyConfig",
    "from_generator_spec",
    "read_matrix_market",
    "solve",
]
