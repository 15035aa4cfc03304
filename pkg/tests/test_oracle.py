import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from conftest import random_ground
from emd2loss.errors import InvalidInputError
from emd2loss.oracle import TransportProblem, check_plan, emd_exact, solve_transport


def brute_force_cost(a, b, D):
    """Min cost over all basic feasible solutions, found by enumerating bases.

    Every vertex of the transportation polytope is determined by a set of
    m + n - 1 cells whose equality system has a unique nonnegative solution.
    """
    m, n = a.size, b.size
    cells = list(itertools.product(range(m), range(n)))
    A = np.zeros((m + n, m * n))
    for i, j in cells:
        A[i, i * n + j] = 1
        A[m + j, i * n + j] = 1
    rhs = np.concatenate([a, b])
    best = np.inf
    for basis in itertools.combinations(range(m * n), m + n - 1):
        sub = A[:, basis]
        if np.linalg.matrix_rank(sub) < m + n - 1:
            continue
        x, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
        if np.any(x < -1e-12) or np.max(np.abs(sub @ x - rhs)) > 1e-10:
            continue
        best = min(best, float(np.dot(D.ravel()[list(basis)], x)))
    return best


def linprog_cost(a, b, D):
    m, n = a.size, b.size
    A_eq = []
    for i in range(m):
        row = np.zeros((m, n))
        row[i] = 1
        A_eq.append(row.ravel())
    for j in range(n):
        col = np.zeros((m, n))
        col[:, j] = 1
        A_eq.append(col.ravel())
    res = linprog(D.ravel(), A_eq=np.array(A_eq), b_eq=np.concatenate([a, b]),
                  bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun


def test_brute_force_small(rng):
    for C in (2, 3):
        for _ in range(15):
            a, b = rng.dirichlet(np.ones(C)), rng.dirichlet(np.ones(C))
            D = random_ground(rng, C)
            plan = solve_transport(TransportProblem(a, b, D))
            assert plan.total_cost == pytest.approx(brute_force_cost(a, b, D), abs=1e-12)


def test_brute_force_rectangular(rng):
    for _ in range(10):
        a, b = rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(4))
        D = rng.random((2, 4))
        plan = solve_transport(TransportProblem(a, b, D))
        assert plan.total_cost == pytest.approx(brute_force_cost(a, b, D), abs=1e-12)


@given(st.integers(2, 9), st.integers(2, 9), st.integers(0, 2**32 - 1))
@settings(max_examples=80, deadline=None)
def test_matches_linear_programming(m, n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
    D = rng.random((m, n)) * 5
    plan = solve_transport(TransportProblem(a, b, D))
    assert plan.total_cost == pytest.approx(linprog_cost(a, b, D), abs=1e-9)
    assert check_plan(TransportProblem(a, b, D), plan) == []


@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_dual_certificate(C, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.dirichlet(np.ones(C)), rng.dirichlet(np.ones(C))
    D = random_ground(rng, C)
    plan = solve_transport(TransportProblem(a, b, D))
    # dual feasibility and zero duality gap
    assert np.all(plan.u[:, None] + plan.v[None, :] <= D + 1e-9)
    assert plan.u @ a + plan.v @ b == pytest.approx(plan.total_cost, abs=1e-9)
    # complementary slackness on positive flows
    pos = plan.flow > 1e-12
    np.testing.assert_allclose((plan.u[:, None] + plan.v[None, :])[pos], D[pos], atol=1e-9)


def test_ordered_cdf_identity(rng):
    for C in range(2, 9):
        idx = np.arange(C)
        D = np.abs(idx[:, None] - idx[None, :]).astype(float)
        for _ in range(30):
            p, t = rng.dirichlet(np.ones(C)), rng.dirichlet(np.ones(C))
            closed = np.sum(np.abs(np.cumsum(p) - np.cumsum(t)))
            assert abs(emd_exact(p, t, D) - closed) < 1e-9


def test_identical_distributions_cost_zero():
    p = np.array([0.25, 0.25, 0.5])
    plan = solve_transport(TransportProblem(p, p, random_ground(np.random.default_rng(1), 3)))
    assert plan.total_cost == 0.0
    np.testing.assert_allclose(np.diag(plan.flow), p)


def test_degenerate_equal_partial_sums():
    # northwest corner exhausts a row and a column at the same time
    a = np.array([0.5, 0.5])
    b = np.array([0.5, 0.5])
    D = np.array([[1.0, 0.0], [0.0, 1.0]])
    plan = solve_transport(TransportProblem(a, b, D))
    assert plan.total_cost == 0.0
    assert len(plan.basis) == 3


def test_degenerate_one_hot_and_zero_entries():
    D = random_ground(np.random.default_rng(3), 5)
    a = np.array([0.0, 0.3, 0.0, 0.7, 0.0])
    b = np.array([0, 0, 1.0, 0, 0])
    plan = solve_transport(TransportProblem(a, b, D))
    assert plan.total_cost == pytest.approx(0.3 * D[1, 2] + 0.7 * D[3, 2], abs=1e-15)


def test_cycling_prone_instance_terminates():
    # many ties in cost and mass; Bland's rule must still terminate
    C = 8
    D = np.ones((C, C)) - np.eye(C)
    a = np.full(C, 1.0 / C)
    b = np.roll(a, 1)
    plan = solve_transport(TransportProblem(a, b, D))
    assert plan.total_cost == pytest.approx(0.0, abs=1e-15)


def test_unbalanced_moves_min_mass(rng):
    a = np.array([0.2, 0.3, 0.5])
    b = np.array([0.1, 0.1])
    D = rng.random((3, 2))
    plan = solve_transport(TransportProblem(a, b, D))
    assert plan.flow.sum() == pytest.approx(0.2)
    np.testing.assert_allclose(plan.flow.sum(axis=0), b, atol=1e-12)
    assert check_plan(TransportProblem(a, b, D), plan) == []
    # reference: the slack formulation solved by linprog
    ref = linprog_cost(a, np.append(b, 0.8), np.hstack([D, np.zeros((3, 1))]))
    assert plan.total_cost == pytest.approx(ref, abs=1e-12)
    assert emd_exact(a, b, D) == pytest.approx(ref / 0.2, abs=1e-12)


def test_invalid_problems():
    with pytest.raises(InvalidInputError):
        TransportProblem([0.5, 0.5], [1.0], np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        TransportProblem([-0.5, 1.5], [1.0, 0.0], np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        TransportProblem([0.5, 0.5], [0.5, 0.5], np.array([[0, np.nan], [1, 0]]))
    with pytest.raises(InvalidInputError):
        TransportProblem([0.0, 0.0], [0.0, 0.0], np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        emd_exact([0.0, 0.0], [1.0, 0.0], np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        TransportProblem(np.ones(65) / 65, np.ones(65) / 65, np.zeros((65, 65)))


def test_check_plan_flags_bad_flow():
    prob = TransportProblem([0.5, 0.5], [0.5, 0.5], np.ones((2, 2)))
    plan = solve_transport(prob)
    plan.flow = plan.flow * 2
    assert check_plan(prob, plan)
