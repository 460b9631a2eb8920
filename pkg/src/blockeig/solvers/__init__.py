"""Block eigensolvers for the smallest eigenpairs of a sparse symmetric matrix."""

from .common import (
    EXPAND_MODES,
    PRECONDITIONERS,
    SOLVERS,
    BlockState,
    ConvergenceRecord,
    SolveResult,
    SolverConfig,
    WorkUnits,
    expansion_vectors,
    soft_lock,
)
from .lobpcg import hl_trick, solve_lobpcg
from .sd import solve_sd
from .si import solve_si
from .tracemin import solve_tracemin

SOLVE_FUNCS = {
    "si": solve_si,
    "sd": solve_sd,
    "lobpcg": solve_lobpcg,
    "tracemin": solve_tracemin,
}


def solve(name: str, A, cfg: SolverConfig, strat=None, X0=None) -> SolveResult:
    """Dispatch to the solver called ``name``."""
    try:
        fn = SOLVE_FUNCS[name]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {SOLVERS}") from None
    return fn(A, cfg, strat, X0)


__all__ = [
    "EXPAND_MODES",
    "PRECONDITIONERS",
    "SOLVERS",
    "SOLVE_FUNCS",
    "BlockState",
    "ConvergenceRecord",
    "SolveResult",
    "SolverConfig",
    "WorkUnits",
    "expansion_vectors",
    "hl_trick",
    "soft_lock",
    "solve",
    "solve_lobpcg",
    "solve_sd",
    "solve_si",
    "solve_tracemin",
]
