import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairtax.core import DegenerateProblemError, RankingConfig, ScoreMatrix, UtilityVector
from fairtax.metrics import gini
from fairtax.waterfill import (
    FLOOR,
    LowerBoundProblem,
    build_problem,
    kkt_residual,
    objective,
    solve,
)

from .oracles import (
    allocation_objective_batch,
    grid_search_two_items,
    projected_gradient_batch,
)


def test_build_problem_symmetric():
    scores = ScoreMatrix(w=np.ones((2, 2)), gamma=np.ones(2))
    problem = build_problem(scores, RankingConfig(k=1, tax_rate=1.0))
    assert np.allclose(problem.a, [1.0, 1.0])  # tau = 1/2 cancels the 2-user mass


def test_build_problem_direct_product():
    scores = ScoreMatrix(w=np.array([[0.5, 0.5]]), gamma=np.array([2.0, 1.0]))
    problem = build_problem(scores, RankingConfig(k=1, tax_rate=0.5))
    assert np.allclose(problem.a, [1.0, 0.5])  # tau = 1 for the single user


def test_build_problem_catalog_scale_shape():
    num_items = 11821
    scores = ScoreMatrix(w=np.full((3, num_items), 0.5), gamma=np.ones(num_items))
    problem = build_problem(scores, RankingConfig(k=10, tax_rate=1.0))
    assert problem.a.shape == (num_items,)


def test_build_problem_rejects_all_zero():
    scores = ScoreMatrix(w=np.zeros((2, 3)), gamma=np.ones(3))
    with pytest.raises(DegenerateProblemError, match="degenerate"):
        build_problem(scores, RankingConfig(k=1))


def test_solve_log_branch_grid_oracle():
    a = np.array([4.0, 1.0])
    problem = LowerBoundProblem(a=a, k=1, tax_rate=1.0)
    e = solve(problem)
    assert np.allclose(e.e, [0.8, 0.2], atol=1e-6)
    best = grid_search_two_items(a, 1.0, 1.0)
    assert objective(problem, e) >= objective(problem, best) - 1e-9


def test_solve_linear_top_k():
    problem = LowerBoundProblem(a=np.array([3.0, 2.0, 1.0]), k=2, tax_rate=0.0)
    e = solve(problem)
    assert np.allclose(e.e, [1.0, 1.0, FLOOR], atol=2e-9)
    assert abs(e.total() - 2.0) < 1e-10


def test_solve_large_t_closed_form_ratio():
    a = np.array([4.0, 1.0])
    problem = LowerBoundProblem(a=a, k=1, tax_rate=100.0)
    e = solve(problem)
    ratio = 4.0 ** 0.01  # interior KKT: e1/e2 = (a1/a2)^(1/t)
    assert np.allclose(e.e, [ratio / (1 + ratio), 1 / (1 + ratio)], atol=1e-9)
    assert np.allclose(e.e, [0.5035, 0.4965], atol=1e-3)
    best = grid_search_two_items(a, 100.0, 1.0)
    assert objective(problem, e) >= objective(problem, best) - 1e-9


def test_solve_nash_proportionality():
    problem = LowerBoundProblem(a=np.array([2.0, 5.0]), k=1, tax_rate=1.0)
    e = solve(problem)
    assert np.allclose(e.e, [2 / 7, 5 / 7], atol=1e-9)


def test_t_zero_tie_breaks_to_lowest_index():
    problem = LowerBoundProblem(a=np.array([1.0, 2.0, 2.0, 1.0]), k=2, tax_rate=0.0)
    e = solve(problem)
    assert set(np.flatnonzero(e.e > 0.5)) == {1, 2}
    problem = LowerBoundProblem(a=np.ones(4), k=2, tax_rate=0.0)
    assert set(np.flatnonzero(solve(problem).e > 0.5)) == {0, 1}


def test_k_equals_items_gives_all_ones():
    problem = LowerBoundProblem(a=np.array([3.0, 1.0]), k=2, tax_rate=2.0)
    assert np.array_equal(solve(problem).e, [1.0, 1.0])


def test_zero_coefficient_items_sit_at_floor():
    problem = LowerBoundProblem(a=np.array([2.0, 0.0, 1.0]), k=1, tax_rate=1.0)
    e = solve(problem)
    assert e.e[1] == FLOOR
    assert abs(e.total() - 1.0) < 1e-10


def test_zero_coefficients_absorb_overflow_budget():
    # only one positive item but K = 2: leftover spreads over zero items
    problem = LowerBoundProblem(a=np.array([1.0, 0.0, 0.0]), k=2, tax_rate=1.0)
    e = solve(problem)
    assert e.e[0] == 1.0
    assert np.allclose(e.e[1:], 0.5)


@given(st.integers(min_value=0, max_value=10 ** 6))
def test_feasibility_and_bounds_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 12))
    k = int(rng.integers(1, n + 1))
    t = float(rng.uniform(0, 4)) if rng.random() < 0.8 else 0.0
    a = rng.uniform(0.01, 10.0, n)
    problem = LowerBoundProblem(a=a, k=k, tax_rate=t)
    e = solve(problem)
    assert abs(e.total() - k) <= 1e-8
    assert np.all(e.e >= FLOOR - 1e-15) and np.all(e.e <= 1.0 + 1e-12)
    assert kkt_residual(problem, e) <= 1e-6


@given(st.integers(min_value=0, max_value=10 ** 6),
       st.floats(min_value=0.001, max_value=1000.0))
def test_scale_invariance_property(seed, c):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.1, 5.0, 6)
    t = float(rng.uniform(0.1, 3.0))
    e1 = solve(LowerBoundProblem(a=a, k=2, tax_rate=t))
    e2 = solve(LowerBoundProblem(a=a * c, k=2, tax_rate=t))
    assert np.abs(e1.e - e2.e).max() <= 1e-9


def test_special_case_limits(rng):
    a = rng.uniform(0.2, 3.0, 8)
    # t = 1: interior coordinates proportional to a
    e = solve(LowerBoundProblem(a=a, k=2, tax_rate=1.0))
    interior = (e.e > FLOOR * 2) & (e.e < 1 - 1e-9)
    ratios = e.e[interior] / a[interior]
    assert ratios.max() / ratios.min() - 1 < 1e-9
    # t = 1000: uncapped coordinates equalize within 1e-2
    e = solve(LowerBoundProblem(a=a, k=3, tax_rate=1000.0))
    un = e.e[e.e < 1 - 1e-9]
    assert un.max() - un.min() < 1e-2
    # t = 0 equals greedy top-K on the coefficients
    e = solve(LowerBoundProblem(a=a, k=3, tax_rate=0.0))
    top = set(np.argsort(-a, kind="stable")[:3])
    assert set(np.flatnonzero(e.e > 0.5)) == top


def test_gini_of_exposure_nonincreasing_in_t(rng):
    a = rng.uniform(0.05, 5.0, 15)
    values = []
    for t in np.arange(0.0, 4.25, 0.25):
        e = solve(LowerBoundProblem(a=a, k=4, tax_rate=float(t)))
        values.append(gini(UtilityVector(e.e), np.ones(15)))
    diffs = np.diff(values)
    assert np.all(diffs <= 1e-9)


def test_matches_projected_gradient_oracle(rng):
    for _ in range(40):
        n = int(rng.integers(2, 7))
        k = int(rng.integers(1, min(3, n) + 1))
        t = float(rng.uniform(0.0, 3.0))
        a = rng.uniform(0.05, 10.0, n)
        problem = LowerBoundProblem(a=a, k=k, tax_rate=t)
        e = solve(problem)
        _, oracle_obj = projected_gradient_batch(a[None, :], k, np.array([t]))
        assert objective(problem, e) >= oracle_obj[0] - 1e-6


def test_objective_agrees_with_independent_batch_form(rng):
    a = rng.uniform(0.1, 4.0, 5)
    for t in (0.0, 0.7, 1.0, 2.5):
        problem = LowerBoundProblem(a=a, k=2, tax_rate=t)
        e = solve(problem)
        ours = objective(problem, e)
        theirs = allocation_objective_batch(a[None, :], e.e[None, :], np.array([t]))[0]
        assert abs(ours - theirs) < 1e-12 * (1 + abs(ours))


def test_solution_path_continuity(rng):
    a = rng.uniform(0.1, 5.0, 10)
    ts = rng.uniform(0.1, 3.0, 20)
    delta = 1e-3
    steps = []
    for t in ts:
        e0 = solve(LowerBoundProblem(a=a, k=3, tax_rate=float(t)))
        e1 = solve(LowerBoundProblem(a=a, k=3, tax_rate=float(t) + delta))
        steps.append(np.abs(e1.e - e0.e).max())
    steps = np.array(steps)
    assert steps.max() <= 100 * np.median(steps)
