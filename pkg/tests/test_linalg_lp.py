import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ersaa.errors import RankDeficient
from ersaa.linalg_lp import LinearProgram, least_squares, solve_lp

from oracles import lp_vertex_enumeration


def test_least_squares_exact_interpolation():
    X = np.array([[1.0, 0], [1, 1], [1, 2]])
    beta = least_squares(X, np.array([1.0, 3, 5]))
    np.testing.assert_allclose(beta, [1.0, 2.0], atol=1e-12)


def test_least_squares_collinear_columns():
    with pytest.raises(RankDeficient):
        least_squares(np.array([[1.0, 1], [2, 2]]), np.array([1.0, 2.0]))


def test_least_squares_matches_hand_normal_equations():
    # X'X = [[3,3],[3,5]], X'y = [2,3]  ->  beta = (1/6, 1/2)
    X = np.array([[1.0, 0], [1, 1], [1, 2]])
    beta = least_squares(X, np.array([0.0, 1, 1]))
    np.testing.assert_allclose(beta, [1 / 6, 1 / 2], atol=1e-12)


def test_least_squares_multiple_targets():
    rng = np.random.default_rng(0)
    X = np.column_stack([np.ones(20), rng.normal(size=(20, 2))])
    Y = rng.normal(size=(20, 3))
    beta = least_squares(X, Y)
    ref, *_ = np.linalg.lstsq(X, Y, rcond=None)
    np.testing.assert_allclose(beta, ref, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 40), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_least_squares_residual_orthogonal(n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    if n < p + 1:
        return
    y = rng.normal(size=n)
    beta = least_squares(X, y)
    resid = y - X @ beta
    assert np.max(np.abs(X.T @ resid)) < 1e-8 * (1 + np.abs(X).sum() * np.abs(y).max())


def test_lp_unit_simplex():
    lp = LinearProgram(c=[-1.0, -1.0, 0.0], A=[[1.0, 1.0, 1.0]], b=[1.0])
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(-1.0, abs=1e-12)
    assert sol.x[0] + sol.x[1] == pytest.approx(1.0, abs=1e-12)


def test_lp_infeasible():
    lp = LinearProgram(c=[1.0, 0.0], A=[[1.0, 1.0]], b=[-1.0])
    assert solve_lp(lp).status == "infeasible"


def test_lp_unbounded():
    lp = LinearProgram(c=[-1.0], A=[[0.0]], b=[0.0])
    assert solve_lp(lp).status == "unbounded"


def test_lp_redundant_rows():
    lp = LinearProgram(c=[1.0, 2.0, 0.0], A=[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]], b=[1.0, 2.0])
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(0.0, abs=1e-12)


def test_lp_degenerate_cycling_example():
    # Beale's classic cycling LP (min form with slacks); Bland must terminate.
    c = [-0.75, 150, -0.02, 6, 0, 0, 0]
    A = [[0.25, -60, -0.04, 9, 1, 0, 0],
         [0.5, -90, -0.02, 3, 0, 1, 0],
         [0, 0, 1, 0, 0, 0, 1]]
    sol = solve_lp(LinearProgram(c=c, A=A, b=[0, 0, 1]))
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(-0.05, abs=1e-10)


def test_lp_deterministic_vertex():
    rng = np.random.default_rng(3)
    A = rng.uniform(0, 1, size=(3, 6))
    b = A @ rng.uniform(0, 1, size=6)
    c = rng.normal(size=6)
    lp = LinearProgram(c=c, A=A, b=b)
    first, second = solve_lp(lp), solve_lp(lp)
    assert np.array_equal(first.x, second.x)


def random_bounded_lp(rng, m, N):
    A = rng.normal(size=(m, N))
    A[0] = rng.uniform(0.5, 1.5, size=N)  # positive row bounds the region
    x0 = rng.uniform(0, 1, size=N) * (rng.uniform(size=N) < 0.7)
    b = A @ x0
    c = rng.normal(size=N)
    return c, A, b


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_lp_matches_vertex_enumeration(m, N, seed):
    if N < m:
        return
    rng = np.random.default_rng(seed)
    c, A, b = random_bounded_lp(rng, m, N)
    sol = solve_lp(LinearProgram(c=c, A=A, b=b))
    ref, _ = lp_vertex_enumeration(c, A, b)
    assert sol.status == "optimal"
    assert sol.value == pytest.approx(ref, abs=1e-8)
    assert np.max(np.abs(A @ sol.x - b)) < 1e-8 * (1 + np.abs(b).max())
    assert np.count_nonzero(sol.x > 1e-9) <= m
