"""Locally optimal block preconditioned conjugate gradient with soft locking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..kernel import DROP_TOL, project_orthonormalize
from ..strategy import Decision
from .common import BlockSolver, BlockState, expansion_vectors, soft_lock


@dataclass
class _HLBasis:
    """Coefficients behind the current ``P``, kept so that it can be rebuilt
    from the directions of a subset of Ritz vectors."""

    S: np.ndarray
    AS: np.ndarray
    Y: np.ndarray
    Z_x: np.ndarray


def _hl_coeffs(Z: np.ndarray, n_now: int, n_xblock: int):
    """Coefficients of the new ``X`` and ``P`` in the basis ``S``.

    Returns ``(Z_x, Z_p, Y, flops)``; ``Z_p`` spans the part of the new Ritz
    vectors lying outside the previous ``X`` block, orthonormalized against
    ``Z_x`` so that ``S [Z_x, Z_p]`` is orthonormal whenever ``S`` is.
    ``Y`` is the unorthonormalized source of ``Z_p``, column ``i`` belonging
    to Ritz vector ``i``.
    """
    Z_x = Z[:, :n_now]
    Y = Z_x.copy()
    Y[:n_xblock] = 0.0
    Z_p, _, flops = project_orthonormalize(Y, Z_x, DROP_TOL, return_flops=True)
    return Z_x, Z_p, Y, flops


def hl_trick(S, Z, n_now: int, n_xblock: int | None = None):
    """Orthonormal ``[X, P]`` spanning the new Ritz vectors and the previous block.

    Parameters
    ----------
    S : (n, s) ndarray
        Orthonormal search basis whose first ``n_xblock`` columns are the
        previous Ritz vectors.
    Z : (s, m) ndarray
        Orthonormal eigenvectors of the projected matrix, ascending order.
    n_now : int
        Number of Ritz vectors to keep.
    n_xblock : int, optional
        Width of the previous-``X`` block of ``S``; defaults to ``n_now``.

    Returns
    -------
    X : (n, n_now) ndarray
    P : (n, p) ndarray
        ``p <= n_now``; nearly dependent directions are dropped.
    """
    S = np.asarray(S, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[1] < n_now:
        raise ValueError("Z has fewer columns than n_now")
    Z_x, Z_p, _, _ = _hl_coeffs(Z, n_now, n_now if n_xblock is None else n_xblock)
    return S @ Z_x, S @ Z_p


class LOBPCG(BlockSolver):
    name = "lobpcg"

    def initial_state(self) -> BlockState:
        self.hl = None
        st = super().initial_state()
        st.P = np.empty((self.A.n, 0))
        st.AP = np.empty((self.A.n, 0))
        return st

    def step(self, state: BlockState, decision: Decision, report, R):
        n = self.A.n
        X, AX, P, AP = state.X, state.AX, state.P, state.AP
        active = soft_lock(report, self.cfg.tol)
        self.n_locked = X.shape[1] - len(active)
        if self.n_locked and self.hl is not None:
            # locked columns stay in X but leave the residual and direction blocks
            hl = self.hl
            Z_p, _, flops = project_orthonormalize(hl.Y[:, active], hl.Z_x, DROP_TOL, return_flops=True)
            self.work.ortho_flops += flops
            P, AP = hl.S @ Z_p, hl.AS @ Z_p
            self.work.rr_flops += 4 * n * hl.S.shape[1] * Z_p.shape[1]
        XP = np.hstack([X, P])
        W = self.proj_orth(self.precondition(R[:, active]), XP)
        if W.shape[1] == 0:
            return None
        AW = self.matmul(W)
        if decision is Decision.EXPAND:
            extra = expansion_vectors(state, self.cfg.expand_mode, self.rng, self.cfg.n_ex - self.cfg.n_es)
            if extra is not None:
                D = self.proj_orth(extra, np.hstack([XP, W]))
                AD = self.matmul(D)
                # X is refilled first so that the block returns to n_ex columns
                nx = min(self.cfg.n_ex - X.shape[1], D.shape[1])
                X, AX = np.hstack([X, D[:, :nx]]), np.hstack([AX, AD[:, :nx]])
                P, AP = np.hstack([P, D[:, nx:]]), np.hstack([AP, AD[:, nx:]])
                state.X_drop = np.empty((n, 0))
        n_now = X.shape[1]
        S = np.hstack([X, P, W])
        AS = np.hstack([AX, AP, AW])
        theta, Z, Xn, AXn = self.rr(S, AS, n_now)
        Z_x, Z_p, Y, flops = _hl_coeffs(Z, n_now, n_now)
        self.work.ortho_flops += flops
        self.hl = _HLBasis(S, AS, Y, Z_x)
        Pn, APn = S @ Z_p, AS @ Z_p
        self.work.rr_flops += 4 * n * S.shape[1] * Z_p.shape[1]
        new = BlockState(X=Xn, values=theta[:n_now], AX=AXn, X_drop=state.X_drop, P=Pn, AP=APn)
        if decision is Decision.SHRINK:
            new = self.shrink(new)
        return new

    def shrink(self, state: BlockState) -> BlockState:
        n_es = self.cfg.n_es
        state.X_drop = np.hstack([state.X[:, n_es:], state.P[:, n_es:]])
        state.X, state.AX = state.X[:, :n_es], state.AX[:, :n_es]
        state.values = state.values[:n_es]
        state.P, state.AP = state.P[:, :n_es], state.AP[:, :n_es]
        if self.hl is not None:
            self.hl.Y, self.hl.Z_x = self.hl.Y[:, :n_es], self.hl.Z_x[:, :n_es]
        return state


def solve_lobpcg(A, cfg, strat=None, X0=None):
    """LOBPCG with soft locking, the improved Hetmaniuk-Lehoucq basis and
    optional shrink-and-expand."""
    return LOBPCG(A, cfg, strat, X0).run()
