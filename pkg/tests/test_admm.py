import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssdcd import admm, scm


def test_soft_threshold_examples():
    M = np.random.default_rng(0).normal(size=(4, 4))
    assert np.array_equal(admm.soft_threshold(M, 0.0), M)
    out = admm.soft_threshold(np.array([[2, -0.3], [-0.3, 2]]), 0.5)
    assert np.allclose(out, [[1.5, 0], [0, 1.5]], atol=1e-10, rtol=0)
    assert not admm.soft_threshold(np.zeros((3, 3)), 0.7).any()


@settings(max_examples=50, deadline=None)
@given(M=arrays(np.float64, (4, 4), elements=st.floats(-10, 10)), a=st.floats(0, 5))
def test_soft_threshold_contraction_and_support(M, a):
    out = admm.soft_threshold(M, a)
    assert np.linalg.norm(out) <= np.linalg.norm(M) + 1e-12
    assert np.all((out != 0) <= (M != 0))


def test_estimate_rank_examples():
    assert admm.estimate_rank(np.diag([4, 1, 0.01]), 0.1) == 2
    assert admm.estimate_rank(np.eye(6), 0.9) == 6
    u = np.arange(1.0, 5.0)
    assert admm.estimate_rank(np.outer(u, u), 0.5) == 1
    with pytest.raises(admm.SolverError):
        admm.estimate_rank(np.full((2, 2), np.nan), 0.1)


def test_theta_update_examples():
    I = np.eye(3)
    Z = np.zeros((3, 3))
    assert np.allclose(admm.theta_update(I, I, Z, Z, 1.0), 0.5 * I)
    assert np.allclose(admm.theta_update(I, Z, Z, Z, 1.0), I)
    assert admm.theta_prox_eigenvalues(np.array([0.0]), 1.0)[0] == 1.0


def test_theta_update_raises_on_indefinite_argument():
    with pytest.raises(np.linalg.LinAlgError):
        admm.theta_update(np.eye(2), -2 * np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)), 1.0)


def test_theta_update_exact_is_prox_minimizer():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(5, 5))
    C = A @ A.T / 5 + 0.1 * np.eye(5)
    V = rng.normal(size=(5, 5))
    V = V + V.T
    mu = 0.7
    T = admm.theta_update_exact(C, V, np.zeros((5, 5)), np.zeros((5, 5)), mu)
    # stationarity: -T^{-1} + C + mu (T - V) = 0
    grad = -np.linalg.inv(T) + C + mu * (T - V)
    assert np.max(np.abs(grad)) < 1e-10
    assert np.linalg.eigvalsh(T).min() > 0


def test_l_update_examples():
    assert not admm.l_update(np.zeros((3, 3)), 1.0, 1.0, 2).any()
    assert np.allclose(admm.l_update(np.diag([3.0, 1.0]), 0.5, 1.0, 1), np.diag([2.5, 0]), atol=1e-10, rtol=0)
    assert np.allclose(admm.l_update(np.diag([-3.0, 1.0]), 0.5, 1.0, 2), np.diag([0, 0.5]), atol=1e-10, rtol=0)


@settings(max_examples=40, deadline=None)
@given(R=arrays(np.float64, (6, 6), elements=st.floats(-5, 5)), r=st.integers(0, 6), t=st.floats(0, 2))
def test_l_update_psd_and_rank_bound(R, r, t):
    L = admm.l_update(R, t, 1.0, r)
    ev = np.linalg.eigvalsh(L)
    assert ev.min() >= -1e-8
    assert np.sum(ev > 1e-8) <= r
    assert np.allclose(L, L.T)


def test_identity_covariance_closed_form():
    # Oracle: for C = I the optimum is diagonal with 1/s - 1 - lam = 0 per entry, L = 0.
    lam = 0.05
    s_star = 1.0 / (1.0 + lam)
    res = admm.solve(np.eye(20))
    assert res.converged and res.iterations <= 500
    assert res.primal_residual <= 1e-4
    assert np.max(np.abs(res.S - s_star * np.eye(20))) < 1e-2
    assert np.linalg.norm(res.L) <= 1e-3


def test_independent_data_gives_diagonal_sparse_part():
    data = scm.sample(np.zeros((5, 5)), scm.NoiseSpec(), 100000, seed=1)
    res = admm.solve(scm.empirical_covariance(data))
    off = res.S - np.diag(np.diag(res.S))
    assert not np.any(np.abs(off) > 1e-3)


def test_large_nuclear_weight_matches_glasso():
    data = scm.simulate("er", 8, 1, 2000, seed=2)
    C = scm.empirical_covariance(data)
    big = admm.solve(C, admm.AdmmConfig(lambda_l=1e6))
    gl = admm.solve(C, admm.AdmmConfig.glasso())
    assert not big.L.any()
    assert np.max(np.abs(big.S - gl.S)) < 1e-3


def test_matches_convex_solver_optimum():
    cp = pytest.importorskip("cvxpy")
    data = scm.simulate("er", 6, 1, 400, latents=1, seed=5)
    C = scm.empirical_covariance(data).matrix
    ls, ll = 0.05, 0.05
    S = cp.Variable((6, 6), symmetric=True)
    L = cp.Variable((6, 6), PSD=True)
    obj = -cp.log_det(S - L) + cp.trace((S - L) @ C) + ls * cp.sum(cp.abs(S)) + ll * cp.normNuc(L)
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver=cp.CLARABEL) if "CLARABEL" in cp.installed_solvers() else prob.solve()
    res = admm.solve(C, admm.AdmmConfig(tau_rank=1e-12, eps_primal=1e-7, eps_dual=1e-7, max_iter=5000))
    assert res.r_star == 6
    f_admm = admm.objective(res.S, res.L, C, ls, ll)
    assert abs(f_admm - prob.value) < 1e-4 * max(1, abs(prob.value))
    assert np.max(np.abs((res.S - res.L) - (S.value - L.value))) < 1e-3


def test_objective_decreases_from_initialization():
    data = scm.simulate("er", 15, 1, 500, latents=2, seed=3)
    C = scm.empirical_covariance(data)
    res = admm.solve(C)
    S0, _ = admm.initial_precision(C.matrix, None)
    f0 = admm.objective(S0, np.zeros_like(S0), C, 0.05, 0.05)
    assert res.converged and res.feasible
    assert admm.objective(res.S, res.L, C, 0.05, 0.05) <= f0


def test_final_iterates_satisfy_invariants():
    data = scm.simulate("er", 15, 1, 1000, latents=2, seed=7)
    res = admm.solve(scm.empirical_covariance(data), admm.AdmmConfig(record_history=True))
    assert np.allclose(res.S, res.S.T)
    ev = np.linalg.eigvalsh(res.L)
    assert ev.min() >= -1e-8 and np.sum(ev > 1e-8) <= res.r_star
    assert np.linalg.eigvalsh(res.S - res.L).min() > 0
    primal = np.array([h[1] for h in res.history])
    assert np.all(np.isfinite(primal))
    tail = primal[-50:]
    assert np.all(tail[1:] <= 1.5 * np.maximum.accumulate(tail)[:-1])


def test_deterministic():
    data = scm.simulate("er", 12, 1, 300, latents=1, seed=4)
    C = scm.empirical_covariance(data)
    a, b = admm.solve(C), admm.solve(C)
    assert a.S.tobytes() == b.S.tobytes() and a.L.tobytes() == b.L.tobytes()


def test_inexact_update_runs_and_stays_feasible():
    data = scm.simulate("er", 10, 1, 1000, seed=1)
    res = admm.solve(scm.empirical_covariance(data), admm.AdmmConfig(theta_update="inexact"))
    assert res.feasible
    assert np.all(np.isfinite(res.S)) and np.all(np.isfinite(res.L))


def test_singular_covariance_ridge_and_glasso_failure():
    data = scm.simulate("er", 30, 1, 10, seed=0)
    C = scm.empirical_covariance(data)
    assert admm.is_singular(C.matrix)
    res = admm.solve(C)
    assert res.ridge == pytest.approx(1e-4 * np.trace(C.matrix) / 30)
    with pytest.raises(admm.SolverError):
        admm.solve(C, admm.AdmmConfig.glasso())
    with pytest.raises(admm.SolverError):
        admm.solve(C, admm.AdmmConfig(ridge=0.0))


def test_lvgl_mode_uses_full_rank():
    data = scm.simulate("er", 10, 1, 500, latents=1, seed=2)
    res = admm.solve(scm.empirical_covariance(data), admm.AdmmConfig.lvgl())
    assert res.r_star == 10 and res.mode == "lvgl"


def test_config_validation():
    with pytest.raises(ValueError):
        admm.AdmmConfig(lambda_s=0)
    with pytest.raises(ValueError):
        admm.AdmmConfig(tau_rank=1.5)
    with pytest.raises(ValueError):
        admm.AdmmConfig(mode="pca")


def test_rate_scaled_lambda_anchor():
    assert admm.rate_scaled_lambda(50, 1000) == pytest.approx(0.05)
    assert admm.rate_scaled_lambda(15, 100000) < 0.005


def test_decomposition_export(tmp_path):
    res = admm.solve(np.eye(4))
    res.save(tmp_path)
    got, _ = scm.load_matrix_csv(tmp_path / "S.csv")
    assert np.array_equal(got, res.S)
    import json
    meta = json.loads((tmp_path / "decomposition.json").read_text())
    assert {"converged", "iterations", "r_star", "primal_residual", "dual_residual"} <= set(meta)
