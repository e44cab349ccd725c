import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from rendezvous_cmdp.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, SparseLp, solve_lp


def lp(c, A_eq=None, b_eq=(), A_ub=None, b_ub=()):
    return SparseLp(np.asarray(c, float), None if A_eq is None else np.atleast_2d(A_eq), list(b_eq),
                    None if A_ub is None else np.atleast_2d(A_ub), list(b_ub))


def test_single_bound():
    # min x s.t. x >= 1  ->  -x <= -1
    res = solve_lp(lp([1.0], A_ub=[[-1.0]], b_ub=[-1.0]))
    assert res.status == OPTIMAL
    assert res.x == pytest.approx([1.0]) and res.objective == pytest.approx(1.0)


def test_vertex_solution():
    # min -x s.t. x + y = 1 lands on the vertex (1, 0)
    res = solve_lp(lp([-1.0, 0.0], A_eq=[[1.0, 1.0]], b_eq=[1.0]))
    assert res.status == OPTIMAL
    assert res.x == pytest.approx([1.0, 0.0]) and res.objective == pytest.approx(-1.0)


def test_inconsistent_equality():
    # 0 = 1 written as 0*x = 1
    assert solve_lp(lp([1.0], A_eq=[[0.0]], b_eq=[1.0])).status == INFEASIBLE


def test_unbounded():
    assert solve_lp(lp([-1.0, 0.0], A_ub=[[0.0, 1.0]], b_ub=[1.0])).status == UNBOUNDED


def test_redundant_rows():
    res = solve_lp(lp([1.0, 2.0], A_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[3.0, 6.0]))
    assert res.status == OPTIMAL and res.objective == pytest.approx(3.0)


def test_supplied_basis_skips_phase_one():
    # x + y = 1, x <= 0.4; basis {y, slack}
    problem = lp([1.0, 2.0], A_eq=[[1.0, 1.0]], b_eq=[1.0], A_ub=[[1.0, 0.0]], b_ub=[0.4])
    warm = solve_lp(problem, basis=[1, 2])
    cold = solve_lp(problem)
    assert warm.status == cold.status == OPTIMAL
    assert warm.objective == pytest.approx(cold.objective) == pytest.approx(1.6)


def test_bad_basis_falls_back():
    problem = lp([1.0, 2.0], A_eq=[[1.0, 1.0]], b_eq=[1.0], A_ub=[[1.0, 0.0]], b_ub=[0.4])
    res = solve_lp(problem, basis=[0, 0])
    assert res.status == OPTIMAL and res.objective == pytest.approx(1.6)


def test_degenerate_cycling_example():
    # Beale's example cycles under textbook Dantzig pricing without an anti-cycling rule
    c = [-0.75, 150.0, -0.02, 6.0]
    A = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]]
    res = solve_lp(lp(c, A_ub=A, b_ub=[0.0, 0.0, 1.0]))
    assert res.status == OPTIMAL and res.objective == pytest.approx(-0.05)


@st.composite
def random_lps(draw):
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    m_eq, m_ub = int(rng.integers(0, 4)), int(rng.integers(0, 4))
    x0 = rng.random(n) * (rng.random(n) < 0.6)     # a feasible point keeps most instances feasible
    A_eq = sp.random(m_eq, n, density=0.7, random_state=rng).toarray()
    A_ub = sp.random(m_ub, n, density=0.7, random_state=rng).toarray() - 0.3
    b_eq = A_eq @ x0
    b_ub = A_ub @ x0 + rng.random(m_ub) * (rng.random(m_ub) < 0.5)
    if rng.random() < 0.2 and m_eq:
        b_eq = b_eq + 1.0 + rng.random(m_eq)      # often infeasible
    c = rng.normal(size=n)
    # a box keeps it bounded most of the time
    if rng.random() < 0.8:
        A_ub = np.vstack([A_ub, np.ones((1, n))])
        b_ub = np.append(b_ub, max(1.0, x0.sum()) * 3)
    return c, A_eq, b_eq, A_ub, b_ub


@settings(max_examples=150, deadline=None)
@given(random_lps())
def test_against_highs(problem):
    c, A_eq, b_eq, A_ub, b_ub = problem
    ours = solve_lp(SparseLp(c, A_eq, b_eq, A_ub, b_ub))
    ref = linprog(c, A_ub=A_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                  A_eq=A_eq if len(b_eq) else None, b_eq=b_eq if len(b_eq) else None,
                  bounds=(0, None), method="highs")
    expected = {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED}[ref.status]
    assert ours.status == expected
    if expected == OPTIMAL:
        assert ours.objective == pytest.approx(ref.fun, abs=1e-7, rel=1e-7)
        x = ours.x
        assert (x >= -1e-9).all()
        if len(b_eq):
            assert np.abs(A_eq @ x - b_eq).max() <= 1e-8
        if len(b_ub):
            assert (A_ub @ x - b_ub).max() <= 1e-8
