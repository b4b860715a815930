import numpy as np
import pytest

from contactarm import qp
from contactarm.qp import QuadraticProgram, solve_qp, kkt_residual


def grid_search_scalar(objective, lo=-5.0, hi=5.0, step=1e-4, feasible=None):
    """Brute-force scalar minimizer used as an independent oracle."""
    xs = np.arange(lo, hi + step, step)
    if feasible is not None:
        xs = xs[feasible(xs)]
    vals = objective(xs)
    return float(xs[np.argmin(vals)])


def test_unconstrained_minimum():
    prob = QuadraticProgram(H=np.eye(2), g=np.array([-1.0, -2.0]))
    sol = solve_qp(prob)
    assert sol.status == qp.OPTIMAL
    np.testing.assert_allclose(sol.x, [1.0, 2.0], atol=1e-10)


def test_equality_symmetry():
    prob = QuadraticProgram(H=np.eye(2), g=np.zeros(2), A_eq=[[1.0, 1.0]], b_eq=[2.0])
    sol = solve_qp(prob)
    assert sol.status == qp.OPTIMAL
    np.testing.assert_allclose(sol.x, [1.0, 1.0], atol=1e-10)


def test_scalar_inequality_active_kkt():
    # analytic KKT: x = 1, mu = 2; cross-checked by grid search
    prob = QuadraticProgram(H=[[1.0]], g=[-3.0], A_in=[[1.0]], b_in=[1.0])
    sol = solve_qp(prob)
    assert sol.status == qp.OPTIMAL
    x_grid = grid_search_scalar(lambda x: 0.5 * x**2 - 3 * x, feasible=lambda x: x <= 1.0)
    assert abs(sol.x[0] - x_grid) <= 2e-4
    np.testing.assert_allclose(sol.x, [1.0], atol=1e-9)
    np.testing.assert_allclose(sol.mu_in, [2.0], atol=1e-9)


def test_kkt_residual_exact_and_perturbed():
    prob = QuadraticProgram(H=np.eye(2), g=np.array([-1.0, -2.0]))
    sol = solve_qp(prob)
    assert kkt_residual(prob, sol) <= 1e-12
    perturbed = qp.QpSolution(
        x=sol.x + 0.1, lambda_eq=sol.lambda_eq, mu_in=sol.mu_in, status=sol.status, kkt_residual=0.0
    )
    assert abs(kkt_residual(prob, perturbed) - 0.1) <= 1e-12


def test_kkt_residual_on_inequality_solution():
    prob = QuadraticProgram(H=[[1.0]], g=[-3.0], A_in=[[1.0]], b_in=[1.0])
    sol = solve_qp(prob)
    assert kkt_residual(prob, sol) <= 1e-9


def test_infeasible_detection():
    # x <= 0 and x >= 1 cannot both hold
    prob = QuadraticProgram(H=[[1.0]], g=[0.0], A_in=[[1.0], [-1.0]], b_in=[0.0, -1.0])
    sol = solve_qp(prob)
    assert sol.status == qp.INFEASIBLE


def test_rejects_indefinite_hessian():
    with pytest.raises(ValueError):
        QuadraticProgram(H=[[-1.0]], g=[0.0])


def test_random_psd_problems_satisfy_kkt():
    rng = np.random.default_rng(7)
    for _ in range(120):
        n = int(rng.integers(1, 11))
        M = rng.normal(size=(n, n))
        H = M @ M.T + 1e-6 * np.eye(n)
        g = rng.normal(size=n)
        # feasible-by-construction constraints around a random interior point
        x_feas = rng.normal(size=n)
        m_i = int(rng.integers(0, 2 * n + 1))
        A_in = rng.normal(size=(m_i, n))
        b_in = A_in @ x_feas + rng.uniform(0.1, 1.0, size=m_i)
        m_e = int(rng.integers(0, max(1, n // 2) + 1))
        A_eq = rng.normal(size=(m_e, n))
        b_eq = A_eq @ x_feas
        prob = QuadraticProgram(H=H, g=g, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in)
        sol = solve_qp(prob)
        assert sol.status == qp.OPTIMAL
        assert sol.kkt_residual <= 1e-8
        assert np.all(sol.mu_in >= 0.0)


def test_equality_only_matches_direct_kkt_solve():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(2, 9))
        m = int(rng.integers(1, n))
        M = rng.normal(size=(n, n))
        H = M @ M.T + 1e-3 * np.eye(n)
        g = rng.normal(size=n)
        A = rng.normal(size=(m, n))
        b = rng.normal(size=m)
        K = np.block([[H, A.T], [A, np.zeros((m, m))]])
        direct = np.linalg.solve(K, np.concatenate([-g, b]))[:n]
        sol = solve_qp(QuadraticProgram(H=H, g=g, A_eq=A, b_eq=b))
        assert sol.status == qp.OPTIMAL
        np.testing.assert_allclose(sol.x, direct, rtol=1e-10, atol=1e-10)


def test_scalar_box_matches_grid_search():
    rng = np.random.default_rng(3)
    for _ in range(30):
        h = rng.uniform(0.5, 4.0)
        g = rng.uniform(-4.0, 4.0)
        lo, hi = sorted(rng.uniform(-3.0, 3.0, size=2))
        prob = QuadraticProgram(
            H=[[h]], g=[g], A_in=[[1.0], [-1.0]], b_in=[hi, -lo]
        )
        sol = solve_qp(prob)
        assert sol.status == qp.OPTIMAL
        x_grid = grid_search_scalar(
            lambda x: 0.5 * h * x**2 + g * x, lo=lo, hi=hi, step=1e-4
        )
        assert abs(sol.x[0] - x_grid) <= 2e-4


def test_determinism():
    prob_args = dict(
        H=[[2.0, 0.3], [0.3, 1.0]],
        g=[0.5, -1.0],
        A_in=[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
        b_in=[0.5, 0.5, 0.6],
    )
    a = solve_qp(QuadraticProgram(**prob_args))
    b = solve_qp(QuadraticProgram(**prob_args))
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.mu_in, b.mu_in)
