"""Subspace iteration with shift-and-invert."""

from __future__ import annotations

import numpy as np

from ..kernel import factorize_spd
from ..strategy import Decision
from .common import STAGNATION_DECADES, STAGNATION_WINDOW, BlockSolver, BlockState, expansion_vectors


class SubspaceIteration(BlockSolver):
    name = "si"

    def __init__(self, A, cfg, strat=None, X0=None):
        super().__init__(A, cfg, strat, X0)
        self.factor = factorize_spd(A, self.cfg.shift)
        # forward + backward substitution on the stored factor
        self.solve_flops = 4 * self.factor.factor_nnz

    def solve(self, X: np.ndarray) -> np.ndarray:
        self.work.solve_cols += X.shape[1]
        self.work.apply_flops += self.solve_flops * X.shape[1]
        return self.factor.solve(X)

    def step(self, state: BlockState, decision: Decision, report, R):
        Y = self.solve(state.X)
        if self.cfg.expand_mode == "powered_x_drop" and state.X_drop.shape[1]:
            Xd = self.solve(state.X_drop)
            # rescale only; the saved block is deliberately left unorthogonalized
            state.X_drop = Xd / np.linalg.norm(Xd, axis=0)
        if decision is Decision.EXPAND:
            extra = expansion_vectors(state, self.cfg.expand_mode, self.rng, self.cfg.n_ex - self.cfg.n_es)
            if extra is not None:
                Y = np.hstack([Y, extra])
                state.X_drop = np.empty((self.A.n, 0))
        S = self.orth(Y)
        if S.shape[1] == 0:
            return None
        AS = self.matmul(S)
        theta, _, X, AX = self.rr(S, AS, S.shape[1])
        new = BlockState(X=X, values=theta, AX=AX, X_drop=state.X_drop)
        if decision is Decision.SHRINK:
            new = self.shrink(new)
        return new

    def stagnated(self) -> bool:
        h = self.sstate.log_r_history
        if len(h) <= STAGNATION_WINDOW:
            return False
        return h[-1 - STAGNATION_WINDOW] - min(h[-STAGNATION_WINDOW:]) < STAGNATION_DECADES


def solve_si(A, cfg, strat=None, X0=None):
    """Subspace iteration on ``(A - shift I)^{-1}`` with optional shrink-and-expand."""
    return SubspaceIteration(A, cfg, strat, X0).run()
