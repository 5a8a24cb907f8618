"""Fair re-ranking as a taxation process.

The pipeline solves a taxed (alpha-fair) exposure-allocation program over
items, projects the optimal exposure vector onto per-user top-K inclusion
probabilities with entropic optimal transport, samples ranking lists whose
marginals match those probabilities exactly, and measures the resulting
accuracy/fairness trade-off (eCN, eCPM, Gini, Lorenz, price of taxation)
against additive per-item tax baselines.
"""

from .core import (
    ConvergenceError,
    DegenerateProblemError,
    ExposureVector,
    FairtaxError,
    InputFormatError,
    RankingConfig,
    RankingLists,
    RankingProbabilities,
    ScoreMatrix,
    TradeoffPoint,
    UtilityVector,
    ValidationError,
    compute_utilities,
    expected_utilities,
)
from .metrics import ecn, ecpm, gini, lorenz_points, pot, pot_bound
from .policies import ItemTaxPolicy, greedy_popularity_tax, taxed_top_k, top_k
from .sampling import SamplingReport, expected_vs_realized, sample_lists
from .transport import SinkhornState, project, project_with_state, transport_cost
from .waterfill import LowerBoundProblem, build_problem, solve

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DegenerateProblemError",
    "ExposureVector",
    "FairtaxError",
    "InputFormatError",
    "ItemTaxPolicy",
    "LowerBoundProblem",
    "RankingConfig",
    "RankingLists",
    "RankingProbabilities",
    "SamplingReport",
    "ScoreMatrix",
    "SinkhornState",
    "TradeoffPoint",
    "UtilityVector",
    "ValidationError",
    "build_problem",
    "compute_utilities",
    "ecn",
    "ecpm",
    "expected_utilities",
    "expected_vs_realized",
    "gini",
    "greedy_popularity_tax",
    "lorenz_points",
    "pot",
    "pot_bound",
    "project",
    "project_with_state",
    "sample_lists",
    "solve",
    "taxed_top_k",
    "top_k",
    "transport_cost",
]
