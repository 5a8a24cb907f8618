"""Exact water-filling solver for the exposure lower-bound program.

The program allocates K units of per-user exposure share across items:

    maximize    sum_i a_i * e_i^(1 - t) / (1 - t)     (t >= 0, t != 1)
                sum_i a_i * log(e_i)                  (t == 1)
    subject to  sum_i e_i = K,   FLOOR <= e_i <= 1

with a_i = gamma_i * eta_i, eta_i = tau * sum_u w[u, i] and tau = 1/|U|.
The objective is separable and strictly concave for t > 0, so at the
optimum every coordinate where no bound binds equalizes the marginal value
a_i * e_i^(-t) at a common multiplier nu. We locate nu by bisection on
log(nu); sum(e(nu)) is continuous and nonincreasing, so the bracket
[min_i a_i * 1e-12, max_i a_i * FLOOR^(-t)] always contains the root.
t = 0 is the linear accuracy-first limit: the K largest coefficients take
the cap, ties broken toward the lowest index.

The solution is invariant to the scale of a (hence to tau); tau = 1/|U|
merely keeps the coefficients O(1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DegenerateProblemError,
    ExposureVector,
    FairtaxError,
    RankingConfig,
    ScoreMatrix,
    ValidationError,
)

# Floor replacing the open constraint e > 0; needed by log and negative
# powers, and far below every stated tolerance.
FLOOR = 1e-9

# |sum(e) - K| target for the bisection and its hard ceiling.
SUM_TOL = 1e-10
SUM_TOL_HARD = 5e-9

MAX_BISECT = 200

# |t - 1| below this routes to the logarithmic objective branch, which is
# the analytic limit of the power branch and numerically singular there.
LOG_BRANCH_TOL = 1e-9


@dataclass(frozen=True)
class LowerBoundProblem:
    """Separable concave program data: coefficients a, budget K, tax rate t.

    Items with a_i = 0 (zero column mass) are pinned to FLOOR by the
    solver; they cannot carry objective value.
    """

    a: np.ndarray
    k: int
    tax_rate: float

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim != 1:
            raise ValidationError(f"a must be 1-D, got shape {a.shape}")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValidationError("coefficients a must be finite and >= 0")
        if not 1 <= self.k <= a.size:
            raise ValidationError(f"k must satisfy 1 <= k <= {a.size}, got {self.k}")
        if not np.isfinite(self.tax_rate) or self.tax_rate < 0:
            raise ValidationError(f"tax_rate must be finite and >= 0, got {self.tax_rate}")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def num_items(self) -> int:
        return self.a.size

    def zero_mask(self) -> np.ndarray:
        return self.a == 0.0


def build_problem(scores: ScoreMatrix, config: RankingConfig) -> LowerBoundProblem:
    """Assemble coefficients a_i = gamma_i * tau * sum_u w[u, i], tau = 1/|U|."""
    if config.k > scores.num_items:
        raise ValidationError(
            f"k={config.k} exceeds the number of items {scores.num_items}")
    col_mass = scores.w.sum(axis=0)
    if not np.any(col_mass > 0):
        raise DegenerateProblemError(
            "degenerate problem: score matrix has no positive column mass")
    tau = 1.0 / scores.num_users
    a = scores.gamma * (tau * col_mass)
    return LowerBoundProblem(a=a, k=config.k, tax_rate=config.tax_rate)


def _solve_linear(a: np.ndarray, k: int) -> np.ndarray:
    # t = 0: put the cap on the K largest coefficients. The floor mass of
    # the unselected items is shaved off the last selected one so the
    # simplex constraint holds exactly.
    order = np.argsort(-a, kind="stable")
    e = np.full(a.size, FLOOR)
    sel = order[:k]
    e[sel] = 1.0
    e[sel[-1]] -= (a.size - k) * FLOOR
    return e


def _bisect_positive(a_pos: np.ndarray, budget: float, t: float) -> np.ndarray:
    """Water-fill the strictly positive coefficients to the given budget.

    Works on log(nu) so arbitrarily large t (e.g. 1e3, where
    FLOOR^(-t) overflows) stays representable.
    """
    la = np.log(a_pos)
    lo = float(la.min()) + np.log(1e-12)
    hi = float(la.max()) - t * np.log(FLOOR)

    def fill(log_nu: float) -> np.ndarray:
        exponent = (la - log_nu) / t
        e = np.exp(np.minimum(exponent, 0.0))
        return np.maximum(e, FLOOR, out=e)

    if fill(lo).sum() < budget - SUM_TOL or fill(hi).sum() > budget + SUM_TOL:
        raise FairtaxError("internal error: bisection bracket does not cover the budget")

    best_e = None
    best_gap = np.inf
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        e = fill(mid)
        total = e.sum()
        gap = abs(total - budget)
        if gap < best_gap:
            best_gap = gap
            best_e = e
        if gap <= SUM_TOL:
            break
        if total > budget:
            lo = mid
        else:
            hi = mid
    if best_gap > SUM_TOL_HARD:
        raise FairtaxError(
            f"internal error: bisection stalled with budget gap {best_gap:g}")
    return best_e


def solve(problem: LowerBoundProblem) -> ExposureVector:
    """Return the unique maximizer of the lower-bound program.

    KKT characterization for t > 0: e_i = clamp((a_i / nu)^(1/t), FLOOR, 1)
    with nu chosen so the shares sum to K. Items with a_i = 0 sit at FLOOR
    unless the budget cannot fit on the positive items alone, in which case
    the overflow is spread evenly across them (any split of the leftover
    budget among zero-coefficient items is optimal; even is deterministic).
    """
    a, k, t = problem.a, problem.k, problem.tax_rate
    n = a.size
    if k == n:
        return ExposureVector(np.ones(n))
    if t == 0.0:
        return ExposureVector(_solve_linear(a, k))

    pos = a > 0.0
    n_pos = int(pos.sum())
    n_zero = n - n_pos
    if n_pos == 0:
        raise DegenerateProblemError("degenerate problem: all coefficients are zero")

    e = np.full(n, FLOOR)
    budget = k - n_zero * FLOOR
    if budget <= n_pos:
        e[pos] = _bisect_positive(a[pos], budget, t)
    else:
        # Caps bind on every positive item; leftover goes to zero items.
        e[pos] = 1.0
        e[~pos] = (k - n_pos) / n_zero
    return ExposureVector(e)


def objective(problem: LowerBoundProblem, e: np.ndarray | ExposureVector) -> float:
    """Objective value of the lower-bound program at e (zero-a terms drop)."""
    ee = e.e if isinstance(e, ExposureVector) else np.asarray(e, dtype=float)
    a, t = problem.a, problem.tax_rate
    pos = a > 0.0
    ep = np.maximum(ee[pos], FLOOR)
    if abs(t - 1.0) < LOG_BRANCH_TOL:
        return float(np.sum(a[pos] * np.log(ep)))
    p = 1.0 - t
    return float(np.sum(a[pos] * ep ** p) / p)


def kkt_residual(problem: LowerBoundProblem, e: np.ndarray | ExposureVector) -> float:
    """Relative spread of the marginal value a_i * e_i^(-t) over interior items.

    Zero when fewer than two coordinates are strictly between the bounds.
    Computed in log space so large t cannot overflow.
    """
    ee = e.e if isinstance(e, ExposureVector) else np.asarray(e, dtype=float)
    a, t = problem.a, problem.tax_rate
    interior = (a > 0.0) & (ee > FLOOR * (1.0 + 1e-6)) & (ee < 1.0 - 1e-12)
    if interior.sum() < 2:
        return 0.0
    log_mv = np.log(a[interior]) - t * np.log(ee[interior])
    return float(np.expm1(log_mv.max() - log_mv.min()))
