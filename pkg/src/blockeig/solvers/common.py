"""Configuration, bookkeeping and the outer loop shared by all solvers."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..kernel import (
    DROP_TOL,
    estimate_norm2,
    orthonormalize,
    project_orthonormalize,
    sym_eig_small,
)
from ..matio import SparseSym
from ..rr import ResidualReport, RitzSet, assess_convergence
from ..strategy import Decision, StrategyConfig, StrategyState, decide

__all__ = [
    "SolverConfig",
    "BlockState",
    "WorkUnits",
    "ConvergenceRecord",
    "SolveResult",
    "expansion_vectors",
    "soft_lock",
    "EXPAND_MODES",
    "PRECONDITIONERS",
    "SOLVERS",
]

SOLVERS = ("si", "sd", "lobpcg", "tracemin")
EXPAND_MODES = ("x_drop", "powered_x_drop", "random")
PRECONDITIONERS = ("identity", "diagonal")

STAGNATION_WINDOW = 50
STAGNATION_DECADES = 1e-2


@dataclass(frozen=True)
class SolverConfig:
    """Block sizes and run controls.

    ``n_ex`` and ``n_es`` left as ``None`` take the defaults of
    :meth:`resolve`.
    """

    n_ev: int
    n_ex: int | None = None
    n_es: int | None = None
    tol: float = 1e-10
    max_iters: int = 2000
    seed: int = 0
    shift: float = 0.0
    cg_iters: int = 5
    preconditioner: str = "identity"
    expand_mode: str = "x_drop"

    def resolve(self, solver: str, n: int, strategy: StrategyConfig | None = None) -> "SolverConfig":
        """Fill default block sizes and validate against the matrix size.

        ``n_ex`` defaults to ``ceil(1.5 n_ev)`` for LOBPCG and ``2 n_ev``
        otherwise, ``n_es`` to ``n_ev + 5``. When that default would not be
        below ``n_ex`` it falls to the midpoint ``n_ev + (n_ex - n_ev)//2``.
        """
        if solver not in SOLVERS:
            raise ValueError(f"unknown solver {solver!r}")
        if self.n_ev < 1:
            raise ValueError("n_ev must be positive")
        n_ex = self.n_ex
        if n_ex is None:
            n_ex = math.ceil(1.5 * self.n_ev) if solver == "lobpcg" else 2 * self.n_ev
            n_ex = min(n_ex, n)
        n_es = self.n_es
        if n_es is None:
            n_es = self.n_ev + 5
            if n_es >= n_ex:
                n_es = self.n_ev + (n_ex - self.n_ev) // 2
        if self.n_es is not None and not self.n_ev <= n_es <= n_ex:
            raise ValueError(f"need n_ev <= n_es <= n_ex (got {self.n_ev}, {n_es}, {n_ex})")
        if self.n_ev > n_ex or n_ex > n:
            raise ValueError(f"need n_ev <= n_ex <= n (got {self.n_ev}, {n_ex}, {n})")
        adaptive = strategy is not None and strategy.kind != "none"
        if adaptive and not self.n_ev <= n_es < n_ex:
            raise ValueError(f"need n_ev <= n_es < n_ex (got {self.n_ev}, {n_es}, {n_ex})")
        if self.n_ev > n_es and not adaptive:
            n_es = n_ex
        if self.tol <= 0 or self.max_iters < 1 or self.cg_iters < 1:
            raise ValueError("tol, max_iters and cg_iters must be positive")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.expand_mode not in EXPAND_MODES:
            raise ValueError(f"unknown expansion mode {self.expand_mode!r}")
        if self.expand_mode == "powered_x_drop" and solver != "si":
            raise ValueError("powered_x_drop expansion is only defined for SI")
        return replace(self, n_ex=n_ex, n_es=n_es)


@dataclass
class WorkUnits:
    """Cumulative, hardware-independent cost counters."""

    spmv_cols: int = 0
    solve_cols: int = 0
    ortho_flops: int = 0
    rr_flops: int = 0
    apply_flops: int = 0
    rr_dim: int = 0

    @property
    def total(self) -> int:
        return self.apply_flops + self.ortho_flops + self.rr_flops

    def snapshot(self) -> "WorkUnits":
        return replace(self)


@dataclass
class ConvergenceRecord:
    iteration: int
    overall_residual: float
    n_now: int
    event: str
    work: WorkUnits

    def as_dict(self) -> dict:
        d = asdict(self)
        d["work"]["total"] = self.work.total
        return d


@dataclass
class BlockState:
    X: np.ndarray
    values: np.ndarray
    AX: np.ndarray
    X_drop: np.ndarray
    P: np.ndarray | None = None
    AP: np.ndarray | None = None

    @property
    def n_now(self) -> int:
        return self.X.shape[1]


@dataclass
class SolveResult:
    status: str
    values: np.ndarray
    vectors: np.ndarray
    history: list[ConvergenceRecord] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return self.history[-1].iteration if self.history else 0

    @property
    def work(self) -> WorkUnits:
        return self.history[-1].work if self.history else WorkUnits()

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def soft_lock(report: ResidualReport, tol: float) -> np.ndarray:
    """Indices left active once the leading converged prefix is locked."""
    per_pair = np.asarray(report.per_pair)
    bad = np.flatnonzero(~(per_pair <= tol))
    start = int(bad[0]) if bad.size else len(per_pair)
    return np.arange(start, len(per_pair))


def expansion_vectors(state: BlockState, mode: str, rng: np.random.Generator, count: int) -> np.ndarray | None:
    """Columns appended at an expansion, or ``None`` when there are none to use.

    ``x_drop`` and ``powered_x_drop`` both return the saved block (the
    powered variant is kept up to date by the SI solver); ``random`` draws a
    fresh standard-normal block from the run's generator.
    """
    if mode == "random":
        return rng.standard_normal((state.X.shape[0], count))
    if state.X_drop.shape[1] == 0:
        return None
    return state.X_drop


class BlockSolver:
    """Outer loop of a block eigensolver with shrink-and-expand hooks.

    Subclasses implement :meth:`step`, which advances the block by one
    iteration given the strategy decision.
    """

    name = "base"
    lock = False

    def __init__(self, A: SparseSym, cfg: SolverConfig, strat: StrategyConfig | None = None, X0=None):
        self.A = A
        self.strat = strat or StrategyConfig()
        self.cfg = cfg.resolve(self.name, A.n, self.strat)
        self.op = A.to_scipy()
        self.norm_a = estimate_norm2(A)
        self.work = WorkUnits()
        self.history: list[ConvergenceRecord] = []
        self.rng = np.random.default_rng(self.cfg.seed)
        self.sstate = StrategyState(n_es=self.cfg.n_es, n_ex=self.cfg.n_ex)
        self.nnz = A.nnz
        if X0 is None:
            X0 = self.rng.standard_normal((A.n, self.cfg.n_ex))
        else:
            X0 = np.array(X0, dtype=np.float64, copy=True)
            if X0.ndim == 1:
                X0 = X0[:, None]
            if X0.shape[0] != A.n:
                raise ValueError("initial guess has the wrong number of rows")
        self.X0 = X0
        if self.cfg.preconditioner == "diagonal":
            d = A.diagonal()
            d = np.where(np.abs(d) < 1e-12, 1e-12, d)
            self.precond_diag = 1.0 / d
        else:
            self.precond_diag = None
        self.n_locked = 0

    # -- tallied primitives -------------------------------------------------

    def matmul(self, X: np.ndarray) -> np.ndarray:
        self.work.spmv_cols += X.shape[1]
        self.work.apply_flops += 2 * self.nnz * X.shape[1]
        return np.asarray(self.op @ X)

    def orth(self, X: np.ndarray) -> np.ndarray:
        Q, _, flops = orthonormalize(X, DROP_TOL, return_flops=True)
        self.work.ortho_flops += flops
        return Q

    def proj_orth(self, W: np.ndarray, Q: np.ndarray) -> np.ndarray:
        out, _, flops = project_orthonormalize(W, Q, DROP_TOL, return_flops=True)
        self.work.ortho_flops += flops
        return out

    def precondition(self, R: np.ndarray) -> np.ndarray:
        if self.precond_diag is None:
            return R
        return R * self.precond_diag[:, None]

    def rr(self, S: np.ndarray, AS: np.ndarray, keep: int):
        """Rayleigh-Ritz on ``S``; returns values, coefficients and the lifted
        first ``keep`` Ritz vectors together with their images under A."""
        n, s = S.shape
        H = S.T @ AS
        theta, Z = sym_eig_small(H)
        keep = min(keep, s)
        X = S @ Z[:, :keep]
        AX = AS @ Z[:, :keep]
        self.work.rr_dim = s
        self.work.rr_flops += 2 * n * s * s + 4 * n * s * keep + 9 * s**3
        return theta, Z, X, AX

    # -- driver -------------------------------------------------------------

    def initial_state(self) -> BlockState:
        S = self.orth(self.X0)
        AS = self.matmul(S)
        theta, _, X, AX = self.rr(S, AS, S.shape[1])
        return BlockState(X=X, values=theta, AX=AX, X_drop=np.empty((self.A.n, 0)))

    def step(self, state: BlockState, decision: Decision, report: ResidualReport, R: np.ndarray) -> BlockState | None:
        """Advance one iteration; return ``None`` when the search space collapsed."""
        raise NotImplementedError

    def stagnated(self) -> bool:
        return False

    def _result(self, status: str, state: BlockState) -> SolveResult:
        k = min(self.cfg.n_ev, state.X.shape[1])
        return SolveResult(status, state.values[:k].copy(), state.X[:, :k].copy(), self.history)

    def _record(self, j: int, r: float, n_now: int, event: str):
        self.history.append(ConvergenceRecord(j, r, n_now, event, self.work.snapshot()))

    def run(self) -> SolveResult:
        cfg = self.cfg
        state = self.initial_state()
        for j in range(1, cfg.max_iters + 1):
            R = state.AX - state.X * state.values
            n_ev = min(cfg.n_ev, state.X.shape[1])
            report = assess_convergence(self.A, RitzSet(state.values, state.X, None), R, n_ev, cfg.tol)
            if report.converged_count >= cfg.n_ev:
                self._record(j, report.overall, state.n_now, "none")
                return self._result("converged", state)
            self.sstate.j = j
            decision = decide(self.sstate, self.strat, report.overall)
            locked_before = self.n_locked
            new = self.step(state, decision, report, R)
            event = decision.value if decision is not Decision.HOLD else "none"
            if new is None:
                self._record(j, report.overall, state.n_now, event)
                return self._result("stagnated", state)
            state = new
            if event == "none" and self.n_locked > locked_before:
                event = f"lock({self.n_locked})"
            self._record(j, report.overall, state.n_now, event)
            if self.stagnated():
                return self._result("stagnated", state)
        return self._result("max_iters", state)

    def shrink(self, state: BlockState) -> BlockState:
        n_es = self.cfg.n_es
        state.X_drop = state.X[:, n_es:].copy()
        state.X = state.X[:, :n_es]
        state.AX = state.AX[:, :n_es]
        state.values = state.values[:n_es]
        return state
