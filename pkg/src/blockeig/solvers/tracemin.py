"""Trace minimization with inexact projected solves."""

from __future__ import annotations

import numpy as np

from ..kernel import cg_solve
from ..strategy import Decision
from .common import BlockSolver, BlockState, expansion_vectors


class TraceMin(BlockSolver):
    name = "tracemin"

    def __init__(self, A, cfg, strat=None, X0=None):
        super().__init__(A, cfg, strat, X0)
        self.cg_breakdowns = 0

    def step(self, state: BlockState, decision: Decision, report, R):
        X = state.X
        n, m = X.shape

        def project(V):
            # I - X X^T, applied without forming it
            self.work.ortho_flops += 4 * n * m * V.shape[1]
            return V - X @ (X.T @ V)

        # P_X A X = P_X R since the Ritz block satisfies A X = X diag(values) + R
        rhs = project(R)
        delta, broke = cg_solve(lambda V: project(self.matmul(project(V))), rhs, self.cfg.cg_iters)
        self.cg_breakdowns += int(broke.sum())
        Y = X - project(delta)
        if decision is Decision.EXPAND:
            extra = expansion_vectors(state, self.cfg.expand_mode, self.rng, self.cfg.n_ex - self.cfg.n_es)
            if extra is not None:
                Y = np.hstack([Y, extra])
                state.X_drop = np.empty((n, 0))
        S = self.orth(Y)
        if S.shape[1] == 0:
            return None
        AS = self.matmul(S)
        theta, _, Xn, AXn = self.rr(S, AS, S.shape[1])
        new = BlockState(X=Xn, values=theta, AX=AXn, X_drop=state.X_drop)
        if decision is Decision.SHRINK:
            new = self.shrink(new)
        return new


def solve_tracemin(A, cfg, strat=None, X0=None):
    """TraceMIN: ``X <- X - Delta`` with ``Delta`` from a few CG steps on the
    projected system, then Rayleigh-Ritz; optional shrink-and-expand."""
    return TraceMin(A, cfg, strat, X0).run()
