"""Numerical checks of the convergence theory behind shrink-and-expand.

The bound checks work with a symmetric positive definite ``B`` whose
eigenvalues ``sigma`` are taken in *descending* order, so that subspace
iteration ``X <- B X`` targets the ``k`` largest. Shift-and-invert on ``A``
is the special case ``B = A^{-1}``.

Every check returns :class:`BoundReport` objects. A report ``holds`` when
``measured <= bound + 1e-12`` and is ``inconclusive`` when the hypotheses of
the underlying statement are not met by the instance (the comparison is
still carried out and reported).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .kernel import factorize_spd, orthonormalize, sym_eig_small
from .matio import SparseSym

__all__ = [
    "BOUND_SLACK",
    "BoundReport",
    "Example3x3",
    "inverse_rho",
    "inverse_step_tan_ratio",
    "reproduce_3x3",
    "tan_angle",
    "eig_desc",
    "check_rate_bound",
    "check_decomp_bounds",
    "check_perturbation_structure",
    "check_main_bound",
    "main_bound_sweep",
    "loglog_slope",
    "random_spd",
    "random_rate_instance",
    "random_decomp_instance",
    "random_perturbation_instance",
    "random_main_instance",
    "make_expansion",
    "fuzz_rate_bound",
    "fuzz_decomp_bounds",
    "fuzz_perturbation_structure",
    "fix_signs",
    "GOLDEN_3X3",
    "compare_3x3",
]

BOUND_SLACK = 1e-12


@dataclass
class BoundReport:
    name: str
    measured: float
    bound: float
    inconclusive: bool = False
    detail: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.bound - self.measured

    @property
    def holds(self) -> bool:
        return bool(self.measured <= self.bound + BOUND_SLACK)

    @property
    def ok(self) -> bool:
        """Pass for suite purposes: the bound holds or the instance is out of scope."""
        return self.holds or self.inconclusive

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "measured": self.measured,
            "bound": self.bound,
            "slack": self.slack,
            "holds": self.holds,
            "inconclusive": self.inconclusive,
            "detail": self.detail,
        }


def _dense(M) -> np.ndarray:
    if isinstance(M, SparseSym):
        return M.toarray()
    return np.asarray(M, dtype=np.float64)


def _norm(M) -> float:
    M = np.atleast_2d(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def fix_signs(X) -> np.ndarray:
    """Flip columns so that each one's largest-magnitude entry is positive."""
    X = np.array(X, dtype=np.float64, copy=True)
    if X.ndim == 1:
        return X if X[np.argmax(np.abs(X))] >= 0 else -X
    idx = np.argmax(np.abs(X), axis=0)
    s = np.sign(X[idx, np.arange(X.shape[1])])
    s[s == 0] = 1.0
    return X * s


# -- single-vector inverse iteration -------------------------------------------


def _inv_apply(A, x):
    if isinstance(A, SparseSym):
        return factorize_spd(A).solve(x)
    return np.linalg.solve(_dense(A), x)


def inverse_rho(A, x, v1, lam1: float) -> float:
    """Per-step rate of inverse iteration at ``x``: ``lam1 * ||A^{-1} x_check||``.

    ``x_check`` is the normalized part of ``x`` orthogonal to ``v1``. With
    ``(lam1, v1)`` an exact eigenpair this equals the ratio of tangents of
    the angle to ``v1`` before and after one step ``x <- A^{-1} x``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    v1 = np.asarray(v1, dtype=np.float64).ravel()
    v1 = v1 / np.linalg.norm(v1)
    if abs(v1 @ x) == 0:
        raise ValueError("x has no component along v1")
    r = x - v1 * (v1 @ x)
    nr = np.linalg.norm(r)
    if nr <= 1e-15 * np.linalg.norm(x):
        raise ValueError("x is parallel to v1; the rate is undefined")
    return float(lam1 * np.linalg.norm(_inv_apply(A, r / nr)))


def _tan_vec(x, v1) -> float:
    c = abs(v1 @ x)
    return float(np.linalg.norm(x - v1 * (v1 @ x)) / c)


def inverse_step_tan_ratio(A, x, v1) -> float:
    """``tan angle(A^{-1} x, v1) / tan angle(x, v1)`` from an actual step."""
    x = np.asarray(x, dtype=np.float64).ravel()
    v1 = np.asarray(v1, dtype=np.float64).ravel()
    v1 = v1 / np.linalg.norm(v1)
    return _tan_vec(_inv_apply(A, x), v1) / _tan_vec(x, v1)


# -- the 3x3 worked example ----------------------------------------------------


@dataclass
class Example3x3:
    X1: np.ndarray
    rho_x1: float
    x_power: np.ndarray
    rho_power: float
    X2: np.ndarray
    rho_x2: float
    asymptotic: float

    def golden(self) -> dict:
        return {
            "rho_x1": self.rho_x1,
            "rho_power": self.rho_power,
            "rho_x2": self.rho_x2,
            "asymptotic": self.asymptotic,
        }


# golden values of the 3x3 example, as (value, significant digits given)
GOLDEN_3X3 = {
    "rho_x1": (3.5696e-2, 5),
    "rho_power": (9.95e-2, 3),
    "rho_x2": (4.9716e-2, 5),
    "asymptotic": (1.0e-1, 2),
    "X1": (np.array([[9.9998e-1, 2.1951e-3], [-2.4159e-3, 9.9944e-1], [6.5860e-3, 3.3329e-2]]), 5),
    "X2": (np.array([[1.0000e0, -2.0324e-4], [2.2386e-4, 9.9870e-1], [-3.9883e-4, 5.0959e-2]]), 5),
}


def _round_sig(x, digits: int):
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        mag = np.where(x == 0, 0, np.floor(np.log10(np.abs(x))))
    scale = 10.0 ** (digits - 1 - mag)
    return np.round(x * scale) / scale


def compare_3x3(ex: "Example3x3", digits: int = 4) -> dict:
    """Check each quantity of ``ex`` against :data:`GOLDEN_3X3`.

    Values are compared after rounding both sides to ``digits`` significant
    digits, or fewer when the golden value carries fewer. Returns
    ``{name: (computed, expected, ok)}``.
    """
    out = {}
    for name, (expected, shown) in GOLDEN_3X3.items():
        d = min(digits, shown)
        got = getattr(ex, name)
        ok = bool(np.all(_round_sig(got, d) == _round_sig(expected, d)))
        out[name] = (got, expected, ok)
    return out


def _si_step(A: np.ndarray, X: np.ndarray) -> np.ndarray:
    """One shift-and-invert subspace iteration step with Rayleigh-Ritz on ``A``."""
    Q, _ = orthonormalize(np.linalg.solve(A, X))
    _, Z = sym_eig_small(Q.T @ A @ Q)
    return Q @ Z


def reproduce_3x3() -> Example3x3:
    """Rerun the ``diag(1, 10, 100)`` shrink/expand example.

    One block step from ``[[1,1],[1,4],[1,2]]``, a single-vector step from
    its first column, then an expansion by its second column followed by
    another block step. Columns are sign-normalized.
    """
    lam = np.array([1.0, 10.0, 100.0])
    A = np.diag(lam)
    v1 = np.array([1.0, 0.0, 0.0])
    X0 = np.array([[1.0, 1.0], [1.0, 4.0], [1.0, 2.0]])

    X1 = fix_signs(_si_step(A, X0))
    rho_x1 = inverse_rho(A, X1[:, 0], v1, lam[0])

    x = np.linalg.solve(A, X0[:, 0])
    x_power = fix_signs(x / np.linalg.norm(x))
    rho_power = inverse_rho(A, x_power, v1, lam[0])

    X2 = fix_signs(_si_step(A, np.column_stack([x_power, X0[:, 1]])))
    rho_x2 = inverse_rho(A, X2[:, 0], v1, lam[0])
    return Example3x3(X1, rho_x1, x_power, rho_power, X2, rho_x2, lam[0] / lam[1])


# -- angles --------------------------------------------------------------------


def tan_angle(V_k, X) -> float:
    """``tan`` of the largest principal angle between ``span(V_k)`` and ``span(X)``.

    Evaluated as ``||(X - V_k X_k) X_k^{-1}||`` with ``X_k = V_k^T X``; the
    value depends only on the span of ``X``. ``V_k`` must be orthonormal and
    ``X`` must have as many columns as ``V_k``.
    """
    V_k = np.atleast_2d(np.asarray(V_k, dtype=np.float64))
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if V_k.shape[0] != X.shape[0]:
        V_k = V_k.T
    Xk = V_k.T @ X
    if Xk.shape[0] != Xk.shape[1]:
        raise ValueError("X and V_k must have the same number of columns")
    if np.linalg.cond(Xk) > 1e14:
        raise np.linalg.LinAlgError("X_k is singular; the angle is 90 degrees")
    return _norm(np.linalg.solve(Xk.T, (X - V_k @ Xk).T).T)


def eig_desc(B) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and matching orthonormal eigenvectors."""
    w, V = np.linalg.eigh(_dense(B))
    return w[::-1].copy(), V[:, ::-1].copy()


def _blocks(C: np.ndarray, k: int, l: int):
    """Row blocks ``(C_k, C_{l\\k}, C_l^perp)`` of a coefficient matrix."""
    return C[:k], C[k:l], C[l:]


def _right_div(M: np.ndarray, Xk: np.ndarray) -> np.ndarray:
    """``M @ inv(Xk)``."""
    return np.linalg.solve(Xk.T, M.T).T


def _check_kl(n: int, k: int, l: int):
    if not 0 < k < l < n:
        raise ValueError(f"need 0 < k < l < n (got k={k}, l={l}, n={n})")


def _rate_terms(sigma, C, k, l):
    Xk, Xlk, Xperp = _blocks(C, k, l)
    num = _norm(_right_div(Xlk, Xk))
    den = _norm(_right_div(np.vstack([Xlk, Xperp]), Xk))
    ratio = num / den if den > 0 else 0.0
    floor = sigma[l] / sigma[k - 1]
    coeff = (sigma[k] - sigma[l]) / sigma[k - 1]
    return floor, coeff, ratio, den


def _one_step_rate(sigma, V, X, k) -> tuple[float, float]:
    """Measured ``tan(V_k, BX) / tan(V_k, X)`` in exact eigen-coordinates."""
    C = V.T @ X
    tan0 = _norm(_right_div(C[k:], C[:k]))
    BC = sigma[:, None] * C
    tan1 = _norm(_right_div(BC[k:], BC[:k]))
    # a numerically invariant X has nothing left to contract
    return (tan1 / tan0 if tan0 > 1e-14 else 0.0), tan0


# -- one step of subspace iteration --------------------------------------------


def check_rate_bound(B, X, k: int, l: int, eig=None) -> BoundReport:
    """Compare the one-step tangent ratio of ``X <- B X`` with its upper bound.

    The bound is ``s_{l+1}/s_k + (s_{k+1} - s_{l+1})/s_k * t`` where ``t``
    is the ratio ``||X_{l\\k} X_k^{-1}|| / ||[X_{l\\k}; X_l^perp] X_k^{-1}||``
    of coefficient blocks. ``eig`` may carry a precomputed ``eig_desc(B)``.
    """
    sigma, V = eig if eig is not None else eig_desc(B)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = len(sigma)
    _check_kl(n, k, l)
    if X.shape[1] != k:
        raise ValueError("X must have k columns")
    C = V.T @ X
    if np.linalg.cond(C[:k]) > 1e12:
        raise np.linalg.LinAlgError("X_k is singular")
    floor, coeff, ratio, _ = _rate_terms(sigma, C, k, l)
    measured, tan0 = _one_step_rate(sigma, V, X, k)
    return BoundReport(
        "rate",
        measured,
        floor + coeff * ratio,
        detail={"k": k, "l": l, "n": n, "floor": floor, "ratio_term": ratio, "tan_before": tan0},
    )


# -- structure of the expanded space -------------------------------------------


def _inv_sqrt_spd(M: np.ndarray) -> np.ndarray:
    w, Q = np.linalg.eigh((M + M.T) / 2)
    if w.min() <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return (Q / np.sqrt(w)) @ Q.T


def decomp_basis(X, X_exp, V, k: int) -> np.ndarray:
    """Orthonormal basis ``Y = [X_mid (X_mid^T X_mid)^{-1/2}, X_exp]``.

    ``X_mid = X X_k^{-1} - X_exp (X_exp^T X X_k^{-1})``. ``X_exp`` must be
    orthonormal.
    """
    Xk = V[:, :k].T @ X
    XXk = _right_div(X, Xk)
    X_mid = XXk - X_exp @ (X_exp.T @ XXk)
    return np.hstack([X_mid @ _inv_sqrt_spd(X_mid.T @ X_mid), X_exp])


def check_decomp_bounds(X, X_exp, eps_exp: float | None = None, k: int | None = None, V=None) -> list[BoundReport]:
    """Check the seven block bounds of the orthonormal basis of ``span{X, X_exp}``.

    Parameters
    ----------
    X : (n, k) ndarray
    X_exp : (n, l-k) ndarray
        Orthonormal expansion block close to ``V_{l\\k}``.
    eps_exp : float, optional
        Perturbation size ``||V^T X_exp - [0; I; 0]||``; measured when omitted.
    k : int, optional
        Defaults to ``X.shape[1]``.
    V : (n, n) ndarray, optional
        Eigenvectors in the order of the partition; identity when omitted,
        i.e. ``X`` and ``X_exp`` are given in eigen-coordinates.

    Returns
    -------
    list of BoundReport
        ``E11, E21, E31, E31_lower, E12, E22, E32``. The lower bound on
        ``E31`` is reported with signs flipped (``measured = -||E31||``).
    """
    X = np.asarray(X, dtype=np.float64)
    X_exp = np.asarray(X_exp, dtype=np.float64)
    n = X.shape[0]
    k = X.shape[1] if k is None else k
    V = np.eye(n) if V is None else np.asarray(V, dtype=np.float64)
    l = k + X_exp.shape[1]
    _check_kl(n, k, l)
    Cx = V.T @ X
    Xk = Cx[:k]
    eta_t = _norm(_right_div(Cx[l:], Xk))
    eta_h = _norm(_right_div(Cx, Xk))
    Ilk = np.zeros((n, l - k))
    Ilk[k:l] = np.eye(l - k)
    if eps_exp is None:
        eps_exp = _norm(V.T @ X_exp - Ilk)
    e = eps_exp

    Y = decomp_basis(X, X_exp, V, k)
    E = V.T @ Y
    E[:l] -= np.eye(l)
    En = {
        (i, j): _norm(E[r0:r1, c0:c1])
        for i, (r0, r1) in enumerate([(0, k), (k, l), (l, n)], start=1)
        for j, (c0, c1) in enumerate([(0, k), (k, l)], start=1)
    }
    t, h = eta_t, eta_h
    b11 = 0.5 * t**2 + e * (2 * h + t * h + 0.5 * t**2 * h) + e**2 * (4 * h**2 + t * h**2) + 3 * e**3 * h**2
    b21 = e * (2 * h + t**2 * h) + e**2 * (2 * h**2 + 2 * t * h**2) + 6 * e**3 * h**3
    d31 = 0.5 * t**3 + e * (h + t * h + 1.5 * t**2 * h) + e**2 * (h**2 + 4 * t * h**2) + 3 * e**3 * h**3
    # the derivation assumes ||X_mid^T X_mid - I|| < 1
    X_mid_gap = t**2 + 2 * e * (t * h + h) + 6 * e**2 * h**2
    inconclusive = not (t < 1 and X_mid_gap < 1)
    info = {"k": k, "l": l, "n": n, "eps_exp": e, "eta_tilde": t, "eta_hat": h}
    return [
        BoundReport("E11", En[1, 1], b11, inconclusive, info),
        BoundReport("E21", En[2, 1], b21, inconclusive, info),
        BoundReport("E31", En[3, 1], t + d31, inconclusive, info),
        BoundReport("E31_lower", -En[3, 1], -(t - d31), inconclusive, info),
        BoundReport("E12", En[1, 2], e, inconclusive, info),
        BoundReport("E22", En[2, 2], e, inconclusive, info),
        BoundReport("E32", En[3, 2], e, inconclusive, info),
    ]


# -- eigenvectors of a perturbed diagonal matrix -------------------------------


def _polar_unitary(M: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(M, full_matrices=False)
    return U @ Vt


def check_perturbation_structure(H, k: int, alpha: float, Sigma=None) -> list[BoundReport]:
    """Block structure of the eigenvectors ``C`` of ``H = Sigma + dH``.

    Eigenpairs are ordered by descending eigenvalue. ``C`` is compared with
    ``diag(C_1, C_2)`` built from the polar factors of its diagonal blocks;
    off-diagonal deviations are bounded by ``eta = ||dH[:, k:]|| / alpha``
    and diagonal ones by ``eta**2``. ``Sigma`` defaults to ``diag(H)``.

    Returns reports ``dC11, dC12, dC21, dC22``; all are inconclusive when
    ``min(Theta_k) > max(Sigma_{l\\k}) + alpha`` fails.
    """
    H = _dense(H)
    H = (H + H.T) / 2
    l = H.shape[0]
    if not 0 < k < l:
        raise ValueError("need 0 < k < l")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    sig = np.diag(H).copy() if Sigma is None else np.asarray(Sigma, dtype=np.float64).reshape(l, -1)
    if sig.ndim == 2:
        sig = np.diag(sig) if sig.shape[1] == l else sig.ravel()
    dH = H - np.diag(sig)
    theta, C = eig_desc(H)
    eta = _norm(dH[:, k:]) / alpha
    gap_ok = theta[k - 1] > sig[k:].max() + alpha
    ref = sla.block_diag(_polar_unitary(C[:k, :k]), _polar_unitary(C[k:, k:]))
    dC = C - ref
    info = {"k": k, "l": l, "alpha": alpha, "eta_check": eta, "gap": float(theta[k - 1] - sig[k:].max())}
    out = []
    for name, blk, b in [
        ("dC11", dC[:k, :k], eta**2),
        ("dC12", dC[:k, k:], eta),
        ("dC21", dC[k:, :k], eta),
        ("dC22", dC[k:, k:], eta**2),
    ]:
        out.append(BoundReport(name, _norm(blk), b, not gap_ok, info))
    return out


# -- rate after expansion, Rayleigh-Ritz and truncation ------------------------


def _ritz_keep(op: np.ndarray, Q: np.ndarray, k: int, largest: bool) -> np.ndarray:
    theta, Z = sym_eig_small(Q.T @ op @ Q)
    idx = np.arange(len(theta) - k, len(theta))[::-1] if largest else np.arange(k)
    return Q @ Z[:, idx], theta[idx]


def check_main_bound(B, X, X_exp, k: int, l: int, ritz_operator=None, eps_exp: float | None = None, eig=None) -> BoundReport:
    """One-step rate of subspace iteration on ``X_breve`` after expansion.

    ``X_breve`` holds the ``k`` Ritz vectors of ``B`` with the largest Ritz
    values on ``span{X, X_exp}``; with ``ritz_operator=A`` the projection
    uses ``A`` instead and keeps the ``k`` smallest (shift-and-invert form).

    ``measured`` is ``tan(V_k, B X_breve) / tan(V_k, X_breve)`` and
    ``bound`` the one-step bound at ``X_breve``:
    ``floor + coeff * term`` with ``floor = s_{l+1}/s_k``,
    ``coeff = (s_{k+1} - s_{l+1})/s_k`` and ``term`` the block ratio of
    ``X_breve``, which the theory predicts to be ``O(eps_exp)``. The
    detail dict carries ``floor``, ``term``, ``K = term / eps_exp`` and the
    hypotheses. The report is inconclusive when ``eps_exp`` is not well below
    ``eta_tilde < 1`` or the Ritz gap ``alpha`` is not positive.
    """
    sigma, V = eig if eig is not None else eig_desc(B)
    Bd = (V * sigma) @ V.T
    X = np.asarray(X, dtype=np.float64)
    X_exp = np.asarray(X_exp, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X_exp.ndim == 1:
        X_exp = X_exp[:, None]
    n = len(sigma)
    _check_kl(n, k, l)
    Q, kept = orthonormalize(np.hstack([X, X_exp]))
    if Q.shape[1] < k:
        raise np.linalg.LinAlgError("expanded space has dimension below k")
    if ritz_operator is None:
        Xb, theta = _ritz_keep(Bd, Q, k, largest=True)
    else:
        Xb, _ = _ritz_keep(_dense(ritz_operator), Q, k, largest=False)
        theta = np.array([Xb[:, i] @ Bd @ Xb[:, i] for i in range(k)])
    C = V.T @ Xb
    floor, coeff, term, _ = _rate_terms(sigma, C, k, l)
    measured, tan0 = _one_step_rate(sigma, V, Xb, k)

    Cx = V.T @ X
    eta_t = _norm(_right_div(Cx[l:], Cx[:k])) if X.shape[1] == k else float("nan")
    if eps_exp is None:
        Ilk = np.zeros((n, l - k))
        Ilk[k:l] = np.eye(l - k)
        eps_exp = _norm(V.T @ X_exp - Ilk) if X_exp.shape[1] == l - k else float("nan")
    alpha = float(theta.min() - sigma[k])
    hyp = bool(eta_t < 1 and eps_exp <= 0.1 * eta_t and alpha > 0)
    return BoundReport(
        "main",
        measured,
        floor + coeff * term,
        inconclusive=not hyp,
        detail={
            "k": k,
            "l": l,
            "n": n,
            "floor": floor,
            "asymptotic": sigma[k] / sigma[k - 1],
            "term": term,
            "coeff": coeff,
            "eps_exp": eps_exp,
            "K": term / eps_exp if eps_exp > 0 else float("nan"),
            "eta_tilde": eta_t,
            "alpha": alpha,
            "tan_before": tan0,
        },
    )


def make_expansion(n: int, k: int, l: int, eps: float, rng=None, V=None, Delta0=None):
    """Orthonormal ``X_exp`` close to ``V_{l\\k}`` and its exact distance.

    Takes the polar factor of ``[0; I; 0] + eps * Delta0`` (``Delta0``
    random with unit 2-norm unless given) and returns ``(X_exp, eps_actual)``
    where ``eps_actual = ||V^T X_exp - [0; I; 0]||``, so the expansion has
    exactly the form ``V([0; I; 0] + eps_actual * Delta)`` with
    ``||Delta|| = 1``.
    """
    rng = np.random.default_rng(rng)
    Ilk = np.zeros((n, l - k))
    Ilk[k:l] = np.eye(l - k)
    if Delta0 is None:
        Delta0 = rng.standard_normal((n, l - k))
        Delta0 /= _norm(Delta0)
    Qc = _polar_unitary(Ilk + eps * Delta0)
    eps_actual = _norm(Qc - Ilk)
    Vm = np.eye(n) if V is None else V
    return Vm @ Qc, eps_actual


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log10 y`` against ``log10 x``."""
    return float(np.polyfit(np.log10(x), np.log10(y), 1)[0])


def main_bound_sweep(B, X, k: int, l: int, eps_values, rng=None, eig=None, ritz_operator=None) -> dict:
    """Rate after expansion for a sweep of perturbation sizes.

    One perturbation direction is drawn and scaled by each ``eps``; the
    exact expansion ``eps = 0`` is evaluated as the reference. Returns the
    reports, the changes ``|measured(eps) - measured(0)|`` and the
    log-log slopes of both that change and the block-ratio term against
    ``eps``.
    """
    rng = np.random.default_rng(rng)
    sigma, V = eig if eig is not None else eig_desc(B)
    n = len(sigma)
    Delta0 = rng.standard_normal((n, l - k))
    Delta0 /= _norm(Delta0)
    X0_exp, _ = make_expansion(n, k, l, 0.0, V=V, Delta0=Delta0)
    ref = check_main_bound(None, X, X0_exp, k, l, ritz_operator, 0.0, eig=(sigma, V))
    reports, eps_actual = [], []
    for e in eps_values:
        Xe, ea = make_expansion(n, k, l, e, V=V, Delta0=Delta0)
        reports.append(check_main_bound(None, X, Xe, k, l, ritz_operator, ea, eig=(sigma, V)))
        eps_actual.append(ea)
    change = np.array([abs(r.measured - ref.measured) for r in reports])
    terms = np.array([r.detail["term"] for r in reports])
    return {
        "reference": ref,
        "reports": reports,
        "eps": np.array(eps_actual),
        "change": change,
        "terms": terms,
        "slope_change": loglog_slope(eps_actual, change),
        "slope_term": loglog_slope(eps_actual, terms),
    }


# -- random instances ----------------------------------------------------------


def random_spd(n: int, rng, spectrum=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random SPD matrix with a random orthogonal eigenbasis.

    Returns ``(B, sigma, V)`` with ``sigma`` descending. The default
    spectrum is log-uniform on ``[1e-2, 1e2]``.
    """
    rng = np.random.default_rng(rng)
    if spectrum is None:
        spectrum = 10.0 ** rng.uniform(-2, 2, n)
    sigma = np.sort(np.asarray(spectrum, dtype=np.float64))[::-1]
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    B = (V * sigma) @ V.T
    return (B + B.T) / 2, sigma, V


def random_rate_instance(rng, n_max: int = 50, k_max: int = 5, l_max: int = 10) -> dict:
    rng = np.random.default_rng(rng)
    n = int(rng.integers(3, n_max + 1))
    l = int(rng.integers(2, min(l_max, n - 1) + 1))
    k = int(rng.integers(1, min(k_max, l - 1) + 1))
    B, sigma, V = random_spd(n, rng)
    while True:
        X, _ = np.linalg.qr(rng.standard_normal((n, k)))
        if np.linalg.cond(V[:, :k].T @ X) < 1e8:
            break
    return {"B": B, "sigma": sigma, "V": V, "X": X, "k": k, "l": l}


def random_decomp_instance(rng, n_max: int = 40, eps_choices=(1e-6, 1e-4, 1e-3), eta_max: float = 0.3) -> dict:
    """``X`` (in eigen-coordinates) with ``||X_l^perp X_k^{-1}|| <= eta_max`` and
    an orthonormal ``X_exp`` at distance ``eps`` from ``[0; I; 0]``."""
    rng = np.random.default_rng(rng)
    n = int(rng.integers(4, n_max + 1))
    l = int(rng.integers(2, min(10, n - 1) + 1))
    k = int(rng.integers(1, l))
    eps = float(rng.choice(eps_choices))
    eta = float(rng.uniform(1e-3, eta_max))
    G_lk = rng.standard_normal((l - k, k))
    G_lk *= rng.uniform(0, 1) / max(_norm(G_lk), 1e-300)
    G_perp = rng.standard_normal((n - l, k))
    G_perp *= eta / _norm(G_perp)
    X, _ = np.linalg.qr(np.vstack([np.eye(k), G_lk, G_perp]))
    X_exp, eps_actual = make_expansion(n, k, l, eps, rng)
    return {"X": X, "X_exp": X_exp, "eps": eps_actual, "k": k, "l": l, "n": n}


def random_perturbation_instance(rng, l_max: int = 12) -> dict:
    """``H = Sigma + dH`` with a gap of at least ``alpha`` between the top ``k``
    eigenvalues of ``H`` and the rest of ``Sigma``."""
    rng = np.random.default_rng(rng)
    l = int(rng.integers(2, l_max + 1))
    k = int(rng.integers(1, l))
    top = rng.uniform(2.0, 4.0, k)
    rest = rng.uniform(0.0, 1.0, l - k)
    sig = np.concatenate([np.sort(top)[::-1], np.sort(rest)[::-1]])
    dH = rng.standard_normal((l, l))
    dH = (dH + dH.T) / 2
    dH *= 10.0 ** rng.uniform(-4, -1) / _norm(dH)
    H = np.diag(sig) + dH
    theta = np.linalg.eigvalsh(H)[::-1]
    alpha = float(theta[k - 1] - rest.max()) * rng.uniform(0.5, 0.99)
    return {"H": H, "Sigma": sig, "k": k, "alpha": alpha}


def random_main_instance(rng, n: int = 40) -> dict:
    """Well-separated spectrum ``linspace(1, 10, n)**2`` and a block ``X``
    close to ``V_k`` with a sizeable ``V_{l\\k}`` component."""
    rng = np.random.default_rng(rng)
    k = int(rng.integers(1, 4))
    l = k + int(rng.integers(1, 4))
    _, sigma, V = random_spd(n, rng, spectrum=np.linspace(1.0, 10.0, n) ** 2)
    G = np.vstack([np.eye(k), 0.5 * rng.standard_normal((l - k, k)), 0.1 / np.sqrt(n) * rng.standard_normal((n - l, k))])
    X = V @ np.linalg.qr(G)[0]
    return {"sigma": sigma, "V": V, "X": X, "k": k, "l": l, "rng": rng}


# -- fuzz runners --------------------------------------------------------------


def _trial_rng(seed: int, t: int):
    return np.random.default_rng([seed, t])


def fuzz_rate_bound(trials: int, seed: int = 0, **kw) -> list[BoundReport]:
    out = []
    for t in range(trials):
        inst = random_rate_instance(_trial_rng(seed, t), **kw)
        rep = check_rate_bound(None, inst["X"], inst["k"], inst["l"], eig=(inst["sigma"], inst["V"]))
        rep.detail.update(seed=seed, trial=t)
        out.append(rep)
    return out


def fuzz_decomp_bounds(trials: int, seed: int = 0, **kw) -> list[BoundReport]:
    out = []
    for t in range(trials):
        inst = random_decomp_instance(_trial_rng(seed, t), **kw)
        for rep in check_decomp_bounds(inst["X"], inst["X_exp"], inst["eps"], inst["k"]):
            rep.detail = dict(rep.detail, seed=seed, trial=t)
            out.append(rep)
    return out


def fuzz_perturbation_structure(trials: int, seed: int = 0, **kw) -> list[BoundReport]:
    out = []
    for t in range(trials):
        inst = random_perturbation_instance(_trial_rng(seed, t), **kw)
        for rep in check_perturbation_structure(inst["H"], inst["k"], inst["alpha"], inst["Sigma"]):
            rep.detail = dict(rep.detail, seed=seed, trial=t)
            out.append(rep)
    return out
