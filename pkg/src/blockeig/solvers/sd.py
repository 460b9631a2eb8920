"""Block steepest descent."""

from __future__ import annotations

import numpy as np

from ..strategy import Decision
from .common import BlockSolver, BlockState, expansion_vectors


class SteepestDescent(BlockSolver):
    name = "sd"

    def step(self, state: BlockState, decision: Decision, report, R):
        X, AX = state.X, state.AX
        if decision is Decision.EXPAND:
            extra = expansion_vectors(state, self.cfg.expand_mode, self.rng, self.cfg.n_ex - self.cfg.n_es)
            if extra is not None:
                # the saved vectors drifted away from orthogonality with X
                Xd = self.proj_orth(extra, X)
                X = np.hstack([X, Xd])
                AX = np.hstack([AX, self.matmul(Xd)])
                state.X_drop = np.empty((self.A.n, 0))
        n_now = X.shape[1]
        W = self.proj_orth(self.precondition(R), X)
        if W.shape[1] == 0:
            return None
        S = np.hstack([X, W])
        AS = np.hstack([AX, self.matmul(W)])
        theta, _, Xn, AXn = self.rr(S, AS, n_now)
        new = BlockState(X=Xn, values=theta[:n_now], AX=AXn, X_drop=state.X_drop)
        if decision is Decision.SHRINK:
            new = self.shrink(new)
        return new


def solve_sd(A, cfg, strat=None, X0=None):
    """Block steepest descent (search space ``[X, T R]``) with optional shrink-and-expand."""
    return SteepestDescent(A, cfg, strat, X0).run()
