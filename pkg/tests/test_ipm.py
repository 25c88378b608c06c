import numpy as np
import pytest
import scipy.sparse as sp

from hybridres.ipm import IpmOptions, solve
from hybridres.nlp import NlpProblem, SolverError, check_derivatives


def qp(Q, q, A, b, lo, hi, x0=None):
    """min 1/2 x'Qx + q'x  s.t.  Ax = b, lo <= x <= hi."""
    Q, A = np.atleast_2d(Q).astype(float), np.atleast_2d(A).astype(float)
    n = len(q)
    return NlpProblem(
        n=n, m=A.shape[0], x_lower=lo, x_upper=hi,
        x0=np.zeros(n) if x0 is None else x0,
        objective=lambda x: 0.5 * x @ Q @ x + q @ x,
        gradient=lambda x: Q @ x + q,
        constraints=lambda x: A @ x - b,
        jacobian=lambda x: sp.csr_matrix(A),
        hessian=lambda x, lam, s: sp.csr_matrix(s * Q),
    )


def test_box_constrained_quadratic():
    # min (y-3)^2 on [0, 2]
    p = NlpProblem(
        n=1, m=0, x_lower=[0.0], x_upper=[2.0], x0=[1.0],
        objective=lambda x: (x[0] - 3.0) ** 2,
        gradient=lambda x: np.array([2 * (x[0] - 3.0)]),
        constraints=lambda x: np.zeros(0),
        jacobian=lambda x: sp.csr_matrix((0, 1)),
        hessian=lambda x, lam, s: sp.csr_matrix([[2.0 * s]]),
    )
    sol = solve(p)
    assert sol.success
    assert sol.x[0] == pytest.approx(2.0, abs=1e-6)
    assert sol.z_upper[0] == pytest.approx(2.0, rel=1e-4)


def test_equality_constrained_qp_matches_kkt_solution():
    Q = np.diag([2.0, 4.0, 1.0])
    q = np.array([-1.0, 0.5, 2.0])
    A = np.array([[1.0, 1.0, 1.0]])
    b = np.array([1.0])
    inf = np.full(3, np.inf)
    sol = solve(qp(Q, q, A, b, -inf, inf))
    K = np.block([[Q, A.T], [A, np.zeros((1, 1))]])
    ref = np.linalg.solve(K, np.concatenate([-q, b]))
    assert sol.success
    assert np.allclose(sol.x, ref[:3], atol=1e-7)


def test_linear_program_on_simplex():
    # min -x0 - x1 on the simplex: any point of the x0+x1=1 edge is optimal
    sol = solve(qp(np.zeros((3, 3)), np.array([-1.0, -1.0, 0.0]), [[1.0, 1.0, 1.0]], [1.0],
                   np.zeros(3), np.full(3, np.inf), x0=np.full(3, 1 / 3)))
    assert sol.success
    assert sol.objective == pytest.approx(-1.0, abs=1e-6)
    assert sol.x[2] == pytest.approx(0.0, abs=1e-6)


def test_fixed_variables_are_eliminated():
    sol = solve(qp(np.eye(2), np.array([-5.0, -5.0]), np.zeros((0, 2)), np.zeros(0),
                   [0.0, 1.5], [10.0, 1.5]))
    assert sol.success
    assert sol.x[1] == 1.5
    assert sol.x[0] == pytest.approx(5.0, abs=1e-6)
    # dual of the pinned variable balances its gradient
    assert sol.z_lower[1] - sol.z_upper[1] == pytest.approx(1.5 - 5.0, abs=1e-6)


def test_nan_callback_raises():
    p = qp(np.eye(1), np.array([0.0]), np.zeros((0, 1)), np.zeros(0), [-1.0], [1.0])
    p.objective = lambda x: float("nan")
    with pytest.raises(SolverError):
        solve(p)


def test_iteration_limit_is_reported():
    Q = np.diag(np.linspace(1.0, 100.0, 20))
    q = -np.ones(20)
    sol = solve(qp(Q, q, np.ones((1, 20)), [0.3], np.zeros(20), np.ones(20)), IpmOptions(max_iter=2))
    assert not sol.success
    assert sol.status == "max_iter"
    assert sol.iterations == 2


def test_infeasible_bounds_rejected():
    with pytest.raises(ValueError):
        qp(np.eye(1), np.zeros(1), np.zeros((0, 1)), np.zeros(0), [1.0], [0.0])


def test_nonconvex_problem_reaches_local_minimum():
    # min x0*x1 s.t. x0 + x1 = 1, x in [0, 1]^2: minima at the vertices
    p = NlpProblem(
        n=2, m=1, x_lower=np.zeros(2), x_upper=np.ones(2), x0=np.array([0.6, 0.4]),
        objective=lambda x: x[0] * x[1],
        gradient=lambda x: np.array([x[1], x[0]]),
        constraints=lambda x: np.array([x[0] + x[1] - 1.0]),
        jacobian=lambda x: sp.csr_matrix([[1.0, 1.0]]),
        hessian=lambda x, lam, s: sp.csr_matrix([[0.0, s], [s, 0.0]]),
    )
    sol = solve(p)
    assert sol.success
    assert sol.objective == pytest.approx(0.0, abs=1e-6)


def test_check_derivatives_flags_wrong_gradient():
    p = qp(np.diag([1.0, 3.0]), np.array([1.0, 1.0]), [[1.0, 2.0]], [0.0], -np.ones(2), np.ones(2),
           x0=np.array([0.2, -0.1]))
    good = check_derivatives(p)
    assert max(good.values()) < 1e-6
    p.gradient = lambda x: np.diag([1.0, 3.0]) @ x
    assert check_derivatives(p)["gradient"] > 0.5
