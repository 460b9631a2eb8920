import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockeig import theory
from blockeig.matio import gen_diag
from blockeig.theory import (
    BoundReport,
    check_decomp_bounds,
    check_main_bound,
    check_perturbation_structure,
    check_rate_bound,
    compare_3x3,
    eig_desc,
    inverse_rho,
    inverse_step_tan_ratio,
    main_bound_sweep,
    make_expansion,
    random_spd,
    reproduce_3x3,
    tan_angle,
)

A3 = np.diag([1.0, 10.0, 100.0])
E = np.eye(3)


def sig4(x):
    return f"{x:.4e}"


# -- single-vector rates and the worked example ---------------------------------


def test_inverse_rho_golden_values():
    ex = reproduce_3x3()
    assert sig4(inverse_rho(A3, ex.X1[:, 0], E[0], 1.0)) == "3.5696e-02"
    x = np.array([100.0, 10.0, 1.0]) / np.sqrt(10101)
    assert f"{inverse_rho(gen_diag([1, 10, 100]), x, E[0], 1.0):.2e}" == "9.95e-02"


def test_inverse_rho_pure_last_component():
    x = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)
    assert inverse_rho(A3, x, E[0], 1.0) == pytest.approx(1e-2)
    assert inverse_step_tan_ratio(A3, x, E[0]) == pytest.approx(1e-2)


def test_inverse_rho_rejects_degenerate():
    with pytest.raises(ValueError):
        inverse_rho(A3, E[0], E[0], 1.0)
    with pytest.raises(ValueError):
        inverse_rho(A3, E[1], E[0], 1.0)


def test_reproduce_3x3_matches_golden():
    ex = reproduce_3x3()
    res = compare_3x3(ex)
    assert all(ok for _, _, ok in res.values()), {k: v for k, v in res.items() if not v[2]}
    assert sig4(ex.rho_x2) == "4.9716e-02"
    assert ex.asymptotic == pytest.approx(0.1)
    # leading column of the post-expansion block
    np.testing.assert_allclose(np.abs(ex.X2[1:, 0]), [2.2386e-4, 3.9883e-4], rtol=5e-5)


def test_compare_3x3_flags_mismatch():
    ex = reproduce_3x3()
    ex.rho_x2 = 0.05
    assert not compare_3x3(ex)["rho_x2"][2]


# -- angles -----------------------------------------------------------------------


def test_tan_angle_examples():
    assert tan_angle(E[:, :2], E[:, :2]) == 0
    x = (E[:, 0] + E[:, 1]) / np.sqrt(2)
    assert tan_angle(E[:, :1], x) == pytest.approx(1.0)


def test_tan_angle_matches_svd_oracle():
    rng = np.random.default_rng(8)
    V, _ = np.linalg.qr(rng.standard_normal((20, 20)))
    X, _ = np.linalg.qr(rng.standard_normal((20, 3)))
    s = np.linalg.svd(V[:, :3].T @ X, compute_uv=False)
    assert tan_angle(V[:, :3], X) == pytest.approx(np.tan(np.arccos(s.min())), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_tan_angle_basis_invariant(seed):
    rng = np.random.default_rng(seed)
    V, _ = np.linalg.qr(rng.standard_normal((15, 15)))
    X = rng.standard_normal((15, 2))
    M = rng.standard_normal((2, 2)) + 3 * np.eye(2)
    assert tan_angle(V[:, :2], X @ M) == pytest.approx(tan_angle(V[:, :2], X), rel=1e-8)


# -- one-step bound -----------------------------------------------------------------


def test_rate_bound_equality_case():
    B = np.diag([4.0, 2.0, 1.0])
    x = (E[:, 0] + E[:, 2]) / np.sqrt(2)
    rep = check_rate_bound(B, x, 1, 2)
    assert rep.measured == pytest.approx(0.25)
    assert rep.bound == pytest.approx(0.25)
    assert rep.holds


def test_rate_bound_exact_subspace():
    B, sigma, V = random_spd(10, np.random.default_rng(0))
    rep = check_rate_bound(B, V[:, :2], 2, 4)
    assert rep.measured == 0
    assert rep.holds


def test_rate_bound_fuzz():
    reps = theory.fuzz_rate_bound(200, seed=0)
    assert len(reps) == 200
    assert all(r.holds for r in reps)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rate_bound_property(seed):
    inst = theory.random_rate_instance(np.random.default_rng(seed))
    rep = check_rate_bound(inst["B"], inst["X"], inst["k"], inst["l"])
    assert rep.holds


def test_rate_bound_argument_checks():
    with pytest.raises(ValueError):
        check_rate_bound(np.eye(3), E[:, :1], 1, 3)
    with pytest.raises(ValueError):
        check_rate_bound(np.diag([3.0, 2, 1]), E[:, :2], 1, 2)


# -- expanded-space structure --------------------------------------------------------


def test_decomp_exact_everything_zero():
    n, k, l = 8, 2, 4
    X = E8 = np.eye(n)[:, :k]
    X_exp = np.eye(n)[:, k:l]
    reps = check_decomp_bounds(X, X_exp, 0.0)
    for r in reps:
        assert r.holds
        if r.name != "E31_lower":
            assert r.measured == pytest.approx(0, abs=1e-14)
    assert E8.shape == (n, k)


def test_decomp_exact_expansion_generic_x():
    rng = np.random.default_rng(2)
    n, k, l = 12, 2, 5
    X, _ = np.linalg.qr(np.vstack([np.eye(k), 0.3 * rng.standard_normal((n - k, k))]))
    X_exp = np.eye(n)[:, k:l]
    reps = {r.name: r for r in check_decomp_bounds(X, X_exp, 0.0)}
    for name in ("E12", "E22", "E32"):
        assert reps[name].measured == pytest.approx(0, abs=1e-14)
        assert reps[name].bound == 0


def test_decomp_fuzz():
    reps = theory.fuzz_decomp_bounds(100, seed=0)
    assert len(reps) == 700
    assert not any(r.inconclusive for r in reps)
    assert all(r.holds for r in reps)


def test_decomp_rotated_coordinates():
    rng = np.random.default_rng(6)
    inst = theory.random_decomp_instance(rng)
    V, _ = np.linalg.qr(rng.standard_normal((inst["n"], inst["n"])))
    plain = check_decomp_bounds(inst["X"], inst["X_exp"], inst["eps"], inst["k"])
    rotated = check_decomp_bounds(V @ inst["X"], V @ inst["X_exp"], inst["eps"], inst["k"], V=V)
    for a, b in zip(plain, rotated):
        assert a.measured == pytest.approx(b.measured, abs=1e-12)


# -- perturbed eigenvectors -----------------------------------------------------------


def test_perturbation_zero():
    for r in check_perturbation_structure(np.diag([3.0, 2.0, 1.0, 0.1]), 2, 0.9):
        assert r.measured == pytest.approx(0, abs=1e-15)
        assert r.holds


def test_perturbation_small_example():
    rng = np.random.default_rng(1)
    sig = np.array([3.0, 2.0, 1.0, 0.1])
    dH = rng.standard_normal((4, 4))
    dH = (dH + dH.T) / 2
    dH *= 1e-3 / np.linalg.norm(dH[:, 2:], 2)
    reps = {r.name: r for r in check_perturbation_structure(np.diag(sig) + dH, 2, 0.9, sig)}
    assert reps["dC12"].bound == pytest.approx(1e-3 / 0.9)
    assert all(r.holds and not r.inconclusive for r in reps.values())


def test_perturbation_fuzz():
    reps = theory.fuzz_perturbation_structure(100, seed=0)
    assert len(reps) == 400
    assert all(r.ok for r in reps)
    assert sum(r.inconclusive for r in reps) == 0


# -- rate after expansion -------------------------------------------------------------


def main_instance(seed=3, n=40, k=2, l=4):
    rng = np.random.default_rng(seed)
    _, sigma, V = random_spd(n, rng, spectrum=np.linspace(1.0, 10.0, n) ** 2)
    G = np.vstack([np.eye(k), 0.5 * rng.standard_normal((l - k, k)), 0.1 / np.sqrt(n) * rng.standard_normal((n - l, k))])
    return sigma, V, V @ np.linalg.qr(G)[0], k, l, rng


def test_main_bound_exact_expansion_limit():
    sigma, V, X, k, l, _ = main_instance()
    X_exp, eps = make_expansion(len(sigma), k, l, 0.0, V=V)
    assert eps == 0
    rep = check_main_bound(None, X, X_exp, k, l, eig=(sigma, V))
    assert rep.measured <= sigma[l] / sigma[k - 1] + 1e-10
    assert rep.holds


def test_main_bound_sweep_scaling():
    sigma, V, X, k, l, rng = main_instance()
    sw = main_bound_sweep(None, X, k, l, [1e-5, 1e-4, 1e-3], rng=rng, eig=(sigma, V))
    assert abs(sw["slope_change"] - 1) <= 0.3
    assert abs(sw["slope_term"] - 1) <= 0.3
    assert all(r.holds for r in sw["reports"])


def test_main_bound_shift_invert_recast():
    # B = A^{-1}; the Ritz step is taken with A, keeping its smallest values
    ex = reproduce_3x3()
    B = np.linalg.inv(A3)
    # expansion of the once-powered first column by the second start column,
    # followed by one inverse step
    X = B @ (B @ np.array([1.0, 1.0, 1.0]))
    X_exp = B @ np.array([1.0, 4.0, 2.0])
    rep = check_main_bound(B, X, X_exp, 1, 2, ritz_operator=A3)
    assert rep.measured == pytest.approx(ex.rho_x2, rel=1e-10)
    assert rep.measured < 0.1


def test_make_expansion_distance():
    rng = np.random.default_rng(0)
    X_exp, eps = make_expansion(20, 2, 5, 1e-3, rng)
    np.testing.assert_allclose(X_exp.T @ X_exp, np.eye(3), atol=1e-14)
    assert 0.5e-3 <= eps <= 1.5e-3


def test_eig_desc_order():
    sigma, V = eig_desc(np.diag([1.0, 3.0, 2.0]))
    np.testing.assert_array_equal(sigma, [3, 2, 1])
    np.testing.assert_allclose(np.abs(V), np.eye(3)[:, [1, 2, 0]])


def test_bound_report_semantics():
    r = BoundReport("x", 1.0, 1.0 - 1e-13)
    assert r.holds
    r = BoundReport("x", 1.0, 0.5, inconclusive=True)
    assert not r.holds and r.ok
    assert r.as_dict()["slack"] == -0.5
