"""Rayleigh-Ritz projection, residual blocks and convergence assessment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import estimate_norm2, spmv_block, sym_eig_small
from .matio import SparseSym

__all__ = [
    "RitzSet",
    "ResidualReport",
    "rayleigh_ritz",
    "residual_block",
    "relative_residuals",
    "assess_convergence",
]


@dataclass
class RitzSet:
    values: np.ndarray
    vectors: np.ndarray
    coeffs: np.ndarray


@dataclass
class ResidualReport:
    per_pair: np.ndarray
    overall: float
    converged_count: int


def rayleigh_ritz(A: SparseSym, S, AS=None) -> RitzSet:
    """Ritz pairs of ``A`` on the span of the orthonormal block ``S``.

    ``AS`` may be passed when ``A @ S`` is already available.
    """
    S = np.asarray(S, dtype=np.float64)
    if AS is None:
        AS = spmv_block(A, S)
    theta, Z = sym_eig_small(S.T @ AS)
    return RitzSet(theta, S @ Z, Z)


def residual_block(A: SparseSym, ritz: RitzSet, AX=None) -> np.ndarray:
    X = ritz.vectors
    if X.shape[1] != len(ritz.values):
        raise ValueError("vectors and values disagree in count")
    if AX is None:
        AX = spmv_block(A, X)
    return AX - X * ritz.values


def relative_residuals(R, X, values, norm_a: float) -> np.ndarray:
    """Column-wise ``||r_i|| / (||A|| ||v_i|| + ||v_i|| |lambda_i|)``."""
    rn = np.linalg.norm(R, axis=0)
    vn = np.linalg.norm(X, axis=0)
    denom = vn * (norm_a + np.abs(values))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom > 0, rn / denom, np.where(rn > 0, np.inf, 0.0))
    return out


def _leading_converged(per_pair: np.ndarray, tol: float) -> int:
    bad = np.flatnonzero(~(per_pair <= tol))
    return int(bad[0]) if bad.size else len(per_pair)


def assess_convergence(A: SparseSym, ritz: RitzSet, R, n_ev: int, tol: float) -> ResidualReport:
    """Relative residuals of all pairs, the worst over the first ``n_ev``,
    and the length of the leading converged prefix."""
    values = np.asarray(ritz.values)
    if n_ev > len(values):
        raise ValueError(f"n_ev={n_ev} exceeds the {len(values)} available Ritz pairs")
    per_pair = relative_residuals(R, ritz.vectors, values, estimate_norm2(A))
    overall = float(np.max(per_pair[:n_ev])) if n_ev else 0.0
    return ResidualReport(per_pair, overall, _leading_converged(per_pair, tol))
