import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fairtax.core import RankingProbabilities, ScoreMatrix
from fairtax.sampling import _rows_summing_to_k

settings.register_profile(
    "suite", max_examples=30, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


def random_scores(rng, num_users, num_items, gamma=None) -> ScoreMatrix:
    gamma = np.ones(num_items) if gamma is None else gamma
    return ScoreMatrix(w=rng.random((num_users, num_items)), gamma=gamma)


def feasible_probs(rng, num_users, num_items, k) -> RankingProbabilities:
    """Random inclusion-probability rows summing exactly to k."""
    raw = rng.random((num_users, num_items)) + 0.05
    rows = raw * (k / raw.sum(axis=1))[:, None]
    return RankingProbabilities(_rows_summing_to_k(rows, k))


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)
