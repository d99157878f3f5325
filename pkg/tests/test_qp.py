import numpy as np
import pytest

from hybrid_mpem.oracles import projected_gradient, qp_oracle_gap, random_box_qp
from hybrid_mpem.qp import QpProblem, QpStatus, kkt_residual, solve


def test_interior_minimum():
    p = QpProblem(Q=np.eye(4), c=np.zeros(4), lb=-np.ones(4), ub=np.ones(4))
    sol = solve(p)
    assert sol.status is QpStatus.OPTIMAL
    np.testing.assert_array_equal(sol.x_star, 0.0)


def test_all_upper_bounds_active():
    p = QpProblem(Q=np.eye(4), c=-2.0 * np.ones(4), ub=0.5 * np.ones(4))
    sol = solve(p)
    np.testing.assert_allclose(sol.x_star, 0.5, atol=1e-14)
    assert sol.kkt_residual <= 1e-8
    assert np.all(sol.multipliers >= 0)


def test_against_projected_gradient(rng):
    assert qp_oracle_gap(rng, count=200) <= 1e-6


def test_kkt_residual_examples(rng):
    p = QpProblem(Q=np.diag([2.0, 3.0]), c=np.array([-1.0, 1.5]), lb=-np.ones(2), ub=np.ones(2))
    x_int = np.array([0.5, -0.5])
    assert kkt_residual(p, x_int) <= 1e-12
    for _ in range(20):
        x = rng.uniform(-5, 5, 2)
        viol = max(np.max(x - 1.0), np.max(-1.0 - x), 0.0)
        assert kkt_residual(p, x) >= viol
    q = random_box_qp(rng)
    x_pg = projected_gradient(q.Q, q.c, q.lb, q.ub)
    assert kkt_residual(q, x_pg) <= 1e-6


def test_general_inequalities_and_equalities(rng):
    # ramp-style difference rows, a cumulative row and one equality
    n = 6
    D = np.eye(n) - np.eye(n, k=-1)
    A = np.vstack([D, -D, np.tril(np.ones((n, n)))[-1:]])
    b = np.r_[np.full(2 * n, 0.3), 1.0]
    p = QpProblem(Q=np.eye(n) * 2.0, c=-np.linspace(0, 3, n), lb=-np.ones(n), ub=np.ones(n),
                  A_ineq=A, b_ineq=b, A_eq=np.ones((1, n)), b_eq=np.array([1.0]))
    sol = solve(p)
    assert sol.status is QpStatus.OPTIMAL
    assert sol.kkt_residual <= 1e-8
    assert abs(sol.x_star.sum() - 1.0) <= 1e-10
    assert np.all(A @ sol.x_star <= b + 1e-10)
    # no feasible direction improves the objective: compare with a perturbation search
    f = lambda x: 0.5 * x @ p.Q @ x + p.c @ x
    for _ in range(200):
        y = sol.x_star + 1e-3 * rng.standard_normal(n)
        y -= (y.sum() - 1.0) / n
        y = np.clip(y, -1, 1)
        if np.all(A @ y <= b) and abs(y.sum() - 1.0) < 1e-12:
            assert f(y) >= f(sol.x_star) - 1e-12


def test_infeasible_with_certificate():
    A = np.array([[1.0, 1.0]])
    p = QpProblem(Q=np.eye(2), c=np.zeros(2), lb=np.zeros(2), ub=np.ones(2), A_ineq=A, b_ineq=np.array([-1.0]))
    sol = solve(p)
    assert sol.status is QpStatus.INFEASIBLE
    cert = sol.certificate
    C, d, _ = p.constraint_rows()
    # Farkas: y >= 0, C'y = 0, d'y < 0
    assert np.all(cert >= -1e-12)
    np.testing.assert_allclose(C.T @ cert, 0.0, atol=1e-9)
    assert d @ cert < 0


def test_max_iter_returns_best_iterate(rng):
    p = random_box_qp(rng, n=8)
    p = QpProblem(Q=p.Q, c=p.c * 100.0, lb=p.lb, ub=p.ub)
    sol = solve(p, max_iter=1)
    full = solve(p)
    if full.iterations > 1:
        assert sol.status is QpStatus.MAX_ITER
        assert np.all(np.isfinite(sol.x_star))


def test_deterministic(rng):
    p = random_box_qp(rng, n=5)
    a, b = solve(p), solve(p)
    assert a.x_star.tobytes() == b.x_star.tobytes()


def test_rejects_indefinite():
    with pytest.raises(ValueError):
        solve(QpProblem(Q=np.diag([1.0, -1.0]), c=np.zeros(2)))
    with pytest.raises(ValueError):
        QpProblem(Q=np.eye(2), c=np.zeros(2), lb=np.ones(2), ub=np.zeros(2))
