import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairtax.core import DegenerateProblemError, UtilityVector, ValidationError
from fairtax.metrics import ecn, ecpm, gini, lorenz_points, pot, pot_bound

from .oracles import lorenz_area_gini, naive_gini


def test_ecn_trivials():
    assert ecn(UtilityVector(np.array([2.0, 0.0])), 2) == 1.0
    assert ecn(UtilityVector(np.zeros(4)), 7) == 0.0


def test_ecn_matches_compensated_sum(rng):
    v = rng.random(1000)
    assert ecn(UtilityVector(v), 13) == pytest.approx(math.fsum(v) / 13, abs=1e-12)


def test_ecpm_reduces_to_ecn_with_unit_bids(rng):
    v = UtilityVector(rng.random(6))
    assert ecpm(v, np.ones(6), 3) == pytest.approx(ecn(v, 3))


def test_ecpm_one_hot():
    v = UtilityVector(np.array([0.0, 2.0, 0.0]))
    assert ecpm(v, np.array([5.0, 3.0, 1.0]), 2) == pytest.approx(3.0)


def test_ecpm_matches_recount_oracle(rng):
    v = rng.random(40)
    bids = rng.uniform(0.5, 4.0, 40)
    expected = math.fsum(b * x for b, x in zip(bids, v)) / 9
    assert ecpm(UtilityVector(v), bids, 9) == pytest.approx(expected, abs=1e-12)


def test_ecpm_requires_bids(rng):
    with pytest.raises(ValidationError, match="bids required"):
        ecpm(UtilityVector(rng.random(3)), None, 2)


def test_gini_perfect_equality():
    assert gini(UtilityVector(np.ones(4)), np.ones(4)) == 0.0


def test_gini_concentration_three_quarters():
    assert gini(UtilityVector(np.array([0.0, 0.0, 0.0, 1.0])), np.ones(4)) == pytest.approx(0.75)


def test_gini_matches_naive_double_sum(rng):
    for _ in range(25):
        n = int(rng.integers(2, 40))
        v = rng.random(n) * rng.integers(1, 100)
        g = rng.uniform(0.2, 3.0, n)
        assert gini(UtilityVector(v + 1e-6), g) == pytest.approx(
            naive_gini((v + 1e-6) * g), abs=1e-12)


def test_gini_undefined_for_zero_mass():
    with pytest.raises(DegenerateProblemError, match="Gini undefined"):
        gini(UtilityVector(np.zeros(3)), np.ones(3))


@given(st.integers(min_value=0, max_value=10 ** 6),
       st.floats(min_value=1e-3, max_value=1e3))
def test_gini_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    v = rng.random(8) + 1e-3
    g = rng.uniform(0.5, 2.0, 8)
    assert abs(gini(UtilityVector(v), g) - gini(UtilityVector(c * v), g)) <= 1e-12


def test_lorenz_diagonal_for_equal_utilities():
    pts = lorenz_points(UtilityVector(np.ones(5)), np.ones(5))
    assert np.allclose(pts[:, 0], pts[:, 1])


def test_lorenz_degenerate_concentration():
    pts = lorenz_points(UtilityVector(np.array([0.0, 0.0, 1.0])), np.ones(3))
    assert np.allclose(pts, [[0, 0], [1 / 3, 0], [2 / 3, 0], [1, 1]])


def test_lorenz_shape_properties(rng):
    v = rng.random(30)
    pts = lorenz_points(UtilityVector(v + 1e-9), np.ones(30))
    ys = pts[:, 1]
    assert ys[0] == 0.0 and ys[-1] == 1.0
    assert np.all(np.diff(ys) >= -1e-15)          # nondecreasing
    assert np.all(np.diff(ys, 2) >= -1e-12)       # convex polygon


def test_lorenz_area_identity_with_gini(rng):
    for _ in range(10):
        n = int(rng.integers(2, 25))
        v = rng.random(n) + 1e-6
        g = rng.uniform(0.5, 2.0, n)
        pts = lorenz_points(UtilityVector(v), g)
        assert lorenz_area_gini(pts) == pytest.approx(gini(UtilityVector(v), g), abs=1e-9)


def test_pot_trivials():
    assert pot(2.0, 2.0) == 0.0
    assert pot(2.0, 1.0) == 0.5
    with pytest.raises(ValidationError):
        pot(0.0, 1.0)


def test_pot_bound_anchors():
    assert pot_bound(1000, 0.0) == 0.0
    assert pot_bound(1, 3.7) == 0.0
    assert pot_bound(50, math.inf) == pytest.approx(1 - 1 / 50)
    assert pot_bound(50, 1e12) == pytest.approx(1 - 1 / 50, abs=1e-9)
    ts = np.linspace(0, 4, 100)
    vals = [pot_bound(50, float(t)) for t in ts]
    assert np.all(np.diff(vals) > 0)
