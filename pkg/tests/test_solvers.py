import numpy as np
import pytest

from blockeig.matio import gen_diag, gen_diag_geom, gen_laplacian_1d
from blockeig.rr import ResidualReport
from blockeig.solvers import (
    BlockState,
    SolverConfig,
    expansion_vectors,
    hl_trick,
    soft_lock,
    solve,
    solve_lobpcg,
    solve_sd,
    solve_si,
    solve_tracemin,
)
from blockeig.solvers.lobpcg import LOBPCG
from blockeig.solvers.si import SubspaceIteration
from blockeig.solvers.tracemin import TraceMin
from blockeig.strategy import StrategyConfig
from blockeig.theory import inverse_rho

ALL = ["si", "sd", "lobpcg", "tracemin"]


def dense_eigs(A, k):
    return np.linalg.eigvalsh(A.toarray())[:k]


def rel_err(got, exact):
    return np.max(np.abs(np.asarray(got) - exact) / np.abs(exact))


def tracing(cls):
    """Subclass of ``cls`` recording the sum of the leading Ritz values after every step."""

    class Traced(cls):
        def initial_state(self):
            self.traces = []
            return super().initial_state()

        def step(self, *a):
            new = super().step(*a)
            if new is not None:
                self.traces.append(float(np.sum(new.values[: self.cfg.n_ev])))
            return new

    return Traced


# -- configuration ---------------------------------------------------------------


def test_config_defaults():
    c = SolverConfig(n_ev=10).resolve("lobpcg", 400)
    assert (c.n_ex, c.n_es) == (15, 12)
    c = SolverConfig(n_ev=10).resolve("lobpcg", 400, StrategyConfig("fix"))
    assert (c.n_ex, c.n_es) == (15, 12)
    c = SolverConfig(n_ev=10).resolve("si", 400, StrategyConfig("fix"))
    assert (c.n_ex, c.n_es) == (20, 15)


@pytest.mark.parametrize(
    "kw, solver",
    [
        (dict(n_ev=0), "si"),
        (dict(n_ev=5, n_ex=4), "si"),
        (dict(n_ev=5, n_ex=50), "si"),
        (dict(n_ev=5, tol=0), "si"),
        (dict(n_ev=2, expand_mode="powered_x_drop"), "lobpcg"),
        (dict(n_ev=2, preconditioner="ilu"), "sd"),
    ],
)
def test_config_rejects(kw, solver):
    with pytest.raises(ValueError):
        SolverConfig(**kw).resolve(solver, 20)


def test_config_rejects_nes_below_nev_with_strategy():
    with pytest.raises(ValueError):
        SolverConfig(n_ev=10, n_ex=20, n_es=5).resolve("si", 100, StrategyConfig("fix"))


# -- oracle convergence ----------------------------------------------------------


@pytest.mark.parametrize("name", ALL)
def test_exact_invariant_subspace_converges_at_once(name):
    A = gen_diag(np.arange(1.0, 9.0))
    res = solve(name, A, SolverConfig(n_ev=3, n_ex=3), X0=np.eye(8)[:, :3])
    assert res.converged
    assert res.iterations == 1
    np.testing.assert_allclose(res.values, [1, 2, 3])


def test_si_golden_first_step_rate():
    A = gen_diag([1, 10, 100])
    X0 = np.array([[1.0, 1.0], [1.0, 4.0], [1.0, 2.0]])
    res = solve_si(A, SolverConfig(n_ev=1, n_ex=2, max_iters=1), X0=X0)
    x = res.vectors[:, 0]
    assert f"{inverse_rho(A.toarray(), x, np.eye(3)[:, 0], 1.0):.4e}" == "3.5696e-02"


def test_si_laplacian_oracle():
    A = gen_laplacian_1d(200)
    res = solve_si(A, SolverConfig(n_ev=8))
    assert res.converged
    assert rel_err(res.values, dense_eigs(A, 8)) <= 1e-8


def test_si_shift():
    A = gen_laplacian_1d(60)
    res = solve_si(A, SolverConfig(n_ev=3, shift=-0.5))
    assert res.converged
    assert rel_err(res.values, dense_eigs(A, 3)) <= 1e-8


@pytest.mark.parametrize("strategy", ["none", "slopek"])
def test_sd_laplacian_oracle(strategy):
    A = gen_laplacian_1d(100)
    res = solve_sd(A, SolverConfig(n_ev=5, max_iters=5000), StrategyConfig(strategy))
    assert res.converged
    assert rel_err(res.values, dense_eigs(A, 5)) <= 1e-8


def test_sd_slopek_effect():
    A = gen_laplacian_1d(100)
    cfg = SolverConfig(n_ev=5, max_iters=5000)
    base = solve_sd(A, cfg)
    se = solve_sd(A, cfg, StrategyConfig("slopek"))
    assert se.iterations <= 1.3 * base.iterations
    assert se.work.ortho_flops < base.work.ortho_flops


def test_lobpcg_laplacian_oracle_and_trace_monotone():
    A = gen_laplacian_1d(400)
    s = tracing(LOBPCG)(A, SolverConfig(n_ev=10, n_ex=15))
    res = s.run()
    assert res.converged
    assert rel_err(res.values, dense_eigs(A, 10)) <= 1e-8
    t = np.array(s.traces)
    assert np.all(np.diff(t) <= 1e-12 * np.abs(t[1:]))


def test_lobpcg_fix_oracle_and_smaller_blocks():
    A = gen_laplacian_1d(400)
    res = solve_lobpcg(A, SolverConfig(n_ev=10, n_ex=15), StrategyConfig("fix"))
    assert res.converged
    assert rel_err(res.values, dense_eigs(A, 10)) <= 1e-8
    assert np.mean([h.n_now for h in res.history]) < 15
    assert {"shrink", "expand"} <= {h.event for h in res.history}


def test_lobpcg_diagonal_preconditioner():
    A = gen_diag_geom(80, 1.05)
    res = solve_lobpcg(A, SolverConfig(n_ev=3, preconditioner="diagonal", max_iters=500))
    assert res.converged
    assert rel_err(res.values, dense_eigs(A, 3)) <= 1e-8


def test_tracemin_trace_monotone():
    A = gen_diag(np.arange(1.0, 11.0))
    s = tracing(TraceMin)(A, SolverConfig(n_ev=2, cg_iters=5))
    res = s.run()
    assert res.converged
    t = np.array(s.traces)
    assert np.all(np.diff(t) <= 1e-12 * np.abs(t[1:]))


def test_tracemin_laplacian_oracle():
    A = gen_laplacian_1d(150)
    res = solve_tracemin(A, SolverConfig(n_ev=6, cg_iters=5))
    assert res.converged
    assert rel_err(res.values, dense_eigs(A, 6)) <= 1e-6


@pytest.mark.parametrize("name", ALL)
def test_ritz_block_properties(name):
    A = gen_laplacian_1d(60)
    res = solve(name, A, SolverConfig(n_ev=4, max_iters=3000), StrategyConfig("fix"))
    assert res.converged
    X = res.vectors
    np.testing.assert_allclose(X.T @ X, np.eye(4), atol=1e-10)
    assert np.all(np.diff(res.values) > 0)
    iters = [h.iteration for h in res.history]
    assert iters == list(range(1, len(iters) + 1))
    for a, b in zip(res.history, res.history[1:]):
        assert b.work.total >= a.work.total


@pytest.mark.parametrize("name", ALL)
def test_strategy_none_matches_unwarmed_fix_exactly(name):
    # with r_warm = 0 the warm-up never completes, so no block change ever happens
    A = gen_laplacian_1d(50)
    cfg = SolverConfig(n_ev=3, n_ex=6, n_es=4, max_iters=3000)
    a = solve(name, A, cfg, StrategyConfig("none"))
    b = solve(name, A, cfg, StrategyConfig("fix", r_warm=0.0))
    assert a.iterations == b.iterations
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.vectors, b.vectors)


@pytest.mark.parametrize("name", ALL)
@pytest.mark.parametrize("kind", ["fix", "slope", "slopek"])
def test_se_values_match_none(name, kind):
    A = gen_laplacian_1d(60)
    cfg = SolverConfig(n_ev=4, max_iters=3000)
    a = solve(name, A, cfg)
    b = solve(name, A, cfg, StrategyConfig(kind))
    assert a.converged and b.converged
    np.testing.assert_allclose(b.values, a.values, rtol=1e-8)


def test_max_iters_status():
    res = solve_sd(gen_laplacian_1d(100), SolverConfig(n_ev=3, max_iters=3))
    assert res.status == "max_iters"
    assert res.iterations == 3


# -- soft locking --------------------------------------------------------------


def report(per_pair):
    per_pair = np.asarray(per_pair)
    return ResidualReport(per_pair, float(per_pair.max()), 0)


def test_soft_lock_examples():
    np.testing.assert_array_equal(soft_lock(report([1e-3, 1e-4]), 1e-10), [0, 1])
    assert soft_lock(report([1e-12, 1e-13]), 1e-10).size == 0
    np.testing.assert_array_equal(soft_lock(report([1e-12, 1e-12, 1e-6, 1e-12]), 1e-10), [2, 3])


def test_lobpcg_records_locking():
    A = gen_laplacian_1d(100)
    res = solve_lobpcg(A, SolverConfig(n_ev=6, n_ex=8))
    assert res.converged
    assert any(h.event.startswith("lock(") for h in res.history)


# -- HL basis ------------------------------------------------------------------


def test_hl_identity_coefficients():
    rng = np.random.default_rng(3)
    S, _ = np.linalg.qr(rng.standard_normal((30, 9)))
    X, P = hl_trick(S, np.eye(9), 3)
    np.testing.assert_allclose(X, S[:, :3])
    assert P.shape[1] == 0


def test_hl_orthonormal_random():
    rng = np.random.default_rng(4)
    S, _ = np.linalg.qr(rng.standard_normal((60, 12)))
    Z, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    X, P = hl_trick(S, Z, 4)
    XP = np.hstack([X, P])
    assert np.linalg.norm(XP.T @ XP - np.eye(XP.shape[1])) <= 1e-10


def test_hl_first_iteration_spans_old_and_new():
    rng = np.random.default_rng(5)
    n, m = 40, 3
    A = np.diag(np.arange(1.0, n + 1))
    X_old, _ = np.linalg.qr(rng.standard_normal((n, m)))
    R = A @ X_old - X_old @ (X_old.T @ A @ X_old)
    W, _ = np.linalg.qr(R - X_old @ (X_old.T @ R))
    S = np.hstack([X_old, W])
    _, Z = np.linalg.eigh(S.T @ A @ S)
    X_new, P = hl_trick(S, Z, m)
    ref, _ = np.linalg.qr(np.hstack([X_new, X_old]))
    XP = np.hstack([X_new, P])
    np.testing.assert_allclose(XP @ XP.T, ref @ ref.T, atol=1e-10)
    # P is orthogonal to the new Ritz vectors and lies in the W-part of S
    assert np.linalg.norm(X_new.T @ P) <= 1e-12


# -- shrink and expand ---------------------------------------------------------


def test_shrink_then_xdrop_expand_restores_span():
    A = gen_laplacian_1d(40)
    s = SubspaceIteration(A, SolverConfig(n_ev=2, n_ex=6, n_es=3), StrategyConfig("fix"))
    st = s.initial_state()
    X_full = st.X.copy()
    st = s.shrink(st)
    assert st.X.shape[1] == 3
    extra = expansion_vectors(st, "x_drop", s.rng, 3)
    np.testing.assert_array_equal(extra, X_full[:, 3:])
    Q = np.hstack([st.X, extra])
    np.testing.assert_allclose(Q @ Q.T, X_full @ X_full.T, atol=1e-12)


def test_lobpcg_shrink_keeps_p_consistent():
    A = gen_laplacian_1d(40)
    s = LOBPCG(A, SolverConfig(n_ev=2, n_ex=6, n_es=3), StrategyConfig("fix"))
    st = s.initial_state()
    st.P = np.linalg.qr(np.random.default_rng(0).standard_normal((40, 6)))[0]
    st.AP = A.to_scipy() @ st.P
    st = s.shrink(st)
    assert st.X.shape[1] == st.P.shape[1] == 3
    assert st.X_drop.shape[1] == 6


def test_expansion_vectors_modes():
    st = BlockState(X=np.zeros((5, 2)), values=np.zeros(2), AX=np.zeros((5, 2)), X_drop=np.empty((5, 0)))
    assert expansion_vectors(st, "x_drop", np.random.default_rng(0), 2) is None
    a = expansion_vectors(st, "random", np.random.default_rng(9), 2)
    b = expansion_vectors(st, "random", np.random.default_rng(9), 2)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (5, 2)


@pytest.mark.parametrize("mode", ["x_drop", "random", "powered_x_drop"])
def test_si_expand_modes_deterministic(mode):
    A = gen_diag_geom(100, 1.05)
    cfg = SolverConfig(n_ev=3, expand_mode=mode, seed=11)
    a = solve_si(A, cfg, StrategyConfig("fix"))
    b = solve_si(A, cfg, StrategyConfig("fix"))
    assert a.converged
    assert a.iterations == b.iterations
    np.testing.assert_array_equal(a.vectors, b.vectors)
    assert "expand" in {h.event for h in a.history}


def test_tracemin_and_sd_expand_random():
    A = gen_laplacian_1d(60)
    for name in ["sd", "tracemin", "lobpcg"]:
        res = solve(name, A, SolverConfig(n_ev=3, expand_mode="random", max_iters=3000), StrategyConfig("fix"))
        assert res.converged
        assert rel_err(res.values, dense_eigs(A, 3)) <= 1e-6


def test_stagnation_reported():
    # a tolerance below rounding level can never be met; the run must stop on its own
    res = solve_si(gen_laplacian_1d(40), SolverConfig(n_ev=2, max_iters=1000, tol=1e-20))
    assert res.status == "stagnated"
    assert res.iterations < 1000
