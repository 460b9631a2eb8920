"""Linear-algebra primitives shared by the solvers.

Blocks are plain 2-D ``float64`` NumPy arrays (``n x m``); an empty block has
shape ``(n, 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .matio import SparseSym

__all__ = [
    "NotSPDError",
    "SpdFactor",
    "spmv_block",
    "orthonormalize",
    "project_orthonormalize",
    "sym_eig_small",
    "factorize_spd",
    "cg_solve",
    "estimate_norm2",
    "DROP_TOL",
    "DENSE_THRESHOLD",
]

DROP_TOL = 1e-8
DENSE_THRESHOLD = 2000
NORM_ITERS = 30
NORM_SEED = 20240229


class NotSPDError(np.linalg.LinAlgError):
    """Factorization met a non-positive pivot."""

    def __init__(self, pivot: int, value: float):
        super().__init__(f"matrix is not positive definite: pivot {pivot} = {value:.3e}")
        self.pivot = pivot
        self.value = value


def _as_block(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("expected a 2-D block")
    return X


def spmv_block(A: SparseSym, X) -> np.ndarray:
    """Return ``A @ X`` using both triangles of the stored lower half."""
    X = _as_block(X)
    if X.shape[0] != A.n:
        raise ValueError(f"dimension mismatch: A is {A.n}x{A.n}, X has {X.shape[0]} rows")
    return np.asarray(A.to_scipy() @ X)


def _cgs2_into(basis: np.ndarray, q: int, W: np.ndarray, drop_tol: float):
    """Append orthonormalized columns of W to ``basis[:, :q]`` in place.

    Each column is projected twice against everything accepted so far
    (classical Gram-Schmidt, two passes). Returns the new column count and
    the flop tally.
    """
    flops = 0
    for j in range(W.shape[1]):
        w = W[:, j].copy()
        ref = np.linalg.norm(w)
        if ref == 0.0 or not np.isfinite(ref):
            continue
        for _ in range(2):
            if q:
                B = basis[:, :q]
                w -= B @ (B.T @ w)
                flops += 4 * w.size * q
        nrm = np.linalg.norm(w)
        if nrm < drop_tol * ref:
            continue
        basis[:, q] = w / nrm
        q += 1
    return q, flops


def orthonormalize(X, drop_tol: float = DROP_TOL, *, return_flops: bool = False):
    """CGS2 orthonormalization with rank-revealing column dropping.

    Returns ``(Q, kept)``; with ``return_flops=True`` also the flop tally.
    """
    X = _as_block(X)
    n, m = X.shape
    if m > n:
        raise ValueError("more columns than rows")
    basis = np.empty((n, m))
    kept, flops = _cgs2_into(basis, 0, X, drop_tol)
    Q = basis[:, :kept].copy()
    return (Q, kept, flops) if return_flops else (Q, kept)


def project_orthonormalize(W, Q, drop_tol: float = DROP_TOL, *, return_flops: bool = False):
    """Orthonormalize ``W`` against the orthonormal block ``Q`` and internally.

    The block projection ``W - Q (Q^T W)`` is applied twice before the
    column-wise CGS2 pass. Columns are dropped relative to their original
    norm, so ``W = Q`` deflates completely.
    """
    W = _as_block(W)
    Q = _as_block(Q)
    n, m = W.shape
    q = Q.shape[1]
    if Q.shape[0] != n:
        raise ValueError("row mismatch between W and Q")
    ref = np.linalg.norm(W, axis=0)
    V = W.copy()
    flops = 0
    if q:
        for _ in range(2):
            V -= Q @ (Q.T @ V)
            flops += 4 * n * q * m
    # columns already negligible relative to their original size are dropped
    keep = np.linalg.norm(V, axis=0) >= drop_tol * ref
    keep &= ref > 0
    V = V[:, keep]
    basis = np.empty((n, q + V.shape[1]))
    basis[:, :q] = Q
    total, f2 = _cgs2_into(basis, q, V, drop_tol)
    flops += f2
    out = basis[:, q:total].copy()
    kept = total - q
    return (out, kept, flops) if return_flops else (out, kept)


def sym_eig_small(H) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a small dense symmetric matrix, ascending."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be square")
    if not np.all(np.isfinite(H)):
        raise ValueError("H has non-finite entries")
    if H.shape[0] == 0:
        return np.empty(0), np.empty((0, 0))
    Hs = 0.5 * (H + H.T)
    theta, Z = np.linalg.eigh(Hs)
    order = np.argsort(theta, kind="stable")
    return theta[order], Z[:, order]


@dataclass
class SpdFactor:
    """Cholesky-type factorization of ``A - shift*I``, reusable across solves."""

    n: int
    shift: float
    kind: str
    _impl: object
    factor_nnz: int

    def solve(self, B) -> np.ndarray:
        B = _as_block(B)
        if B.shape[0] != self.n:
            raise ValueError("dimension mismatch in solve")
        if self.kind == "dense":
            return sla.cho_solve(self._impl, B, check_finite=False)
        return np.asarray(self._impl.solve(B))


def factorize_spd(A: SparseSym, shift: float = 0.0, dense_threshold: int = DENSE_THRESHOLD) -> SpdFactor:
    """Factorize ``A - shift*I``; raise :class:`NotSPDError` if it is not SPD.

    Small problems use dense LAPACK Cholesky. Larger ones use SuperLU in
    symmetric mode with a minimum-degree ordering on ``A + A^T`` and no
    pivoting, which makes it an LDL^T factorization whose pivots expose
    indefiniteness.
    """
    n = A.n
    if n <= dense_threshold:
        M = A.toarray()
        M[np.diag_indices(n)] -= shift
        c, info = sla.lapack.dpotrf(M, lower=1, clean=1)
        if info > 0:
            raise NotSPDError(info - 1, float(M[info - 1, info - 1]))
        if info < 0:
            raise ValueError("illegal argument to dpotrf")
        return SpdFactor(n, shift, "dense", (c, True), n * (n + 1) // 2)
    M = (A.to_scipy() - shift * sp.identity(n, format="csr")).tocsc()
    lu = spla.splu(
        M,
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )
    d = lu.U.diagonal()
    bad = np.flatnonzero(~(d > 0))
    if bad.size:
        k = int(bad[0])
        raise NotSPDError(int(lu.perm_c[k]), float(d[k]))
    return SpdFactor(n, shift, "sparse", lu, int(lu.L.nnz))


def cg_solve(apply: Callable[[np.ndarray], np.ndarray], B, max_iters: int):
    """Run conjugate gradients on every column of ``B`` from a zero start.

    Exactly ``max_iters`` steps are taken unless a column's residual drops
    below ``1e-14 * ||b||``. No convergence is promised. Returns
    ``(X, breakdown)`` where ``breakdown`` flags columns whose recurrence
    produced a non-positive or non-finite curvature; those keep their last
    finite iterate.
    """
    B = _as_block(B)
    n, m = B.shape
    X = np.zeros_like(B)
    R = B.copy()
    P = R.copy()
    rr = np.einsum("ij,ij->j", R, R)
    bnorm = np.sqrt(rr)
    active = bnorm > 0
    breakdown = np.zeros(m, dtype=bool)
    for _ in range(max_iters):
        active &= np.sqrt(rr) >= 1e-14 * bnorm
        if not active.any():
            break
        idx = np.flatnonzero(active)
        AP = apply(P[:, idx])
        pap = np.einsum("ij,ij->j", P[:, idx], AP)
        ok = np.isfinite(pap) & (pap > 0)
        if not ok.all():
            breakdown[idx[~ok]] = True
            active[idx[~ok]] = False
            idx, AP, pap = idx[ok], AP[:, ok], pap[ok]
            if idx.size == 0:
                break
        alpha = rr[idx] / pap
        Xn = X[:, idx] + P[:, idx] * alpha
        Rn = R[:, idx] - AP * alpha
        fin = np.all(np.isfinite(Xn), axis=0) & np.all(np.isfinite(Rn), axis=0)
        if not fin.all():
            breakdown[idx[~fin]] = True
            active[idx[~fin]] = False
            idx, Xn, Rn = idx[fin], Xn[:, fin], Rn[:, fin]
        X[:, idx] = Xn
        R[:, idx] = Rn
        rr_new = np.einsum("ij,ij->j", Rn, Rn)
        beta = rr_new / rr[idx]
        P[:, idx] = Rn + P[:, idx] * beta
        rr[idx] = rr_new
    return X, breakdown


def estimate_norm2(A: SparseSym) -> float:
    """Spectral norm estimate from 30 power steps on ``A^2`` (fixed seed, cached).

    The returned ``||A x||`` for the final unit vector never exceeds the
    true norm.
    """
    if A.norm_est is not None:
        return A.norm_est
    M = A.to_scipy()
    x = np.random.default_rng(NORM_SEED).standard_normal(A.n)
    x /= np.linalg.norm(x)
    for _ in range(NORM_ITERS):
        y = M @ (M @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            break
        x = y / ny
    est = float(np.linalg.norm(M @ x))
    A.norm_est = est
    return est
