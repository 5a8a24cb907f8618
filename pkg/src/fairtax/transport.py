"""Entropic optimal-transport projection of an exposure vector onto
per-user ranking probabilities via Sinkhorn matrix scaling.

The program solved is

    minimize   <x, -C> + lambda_ot * sum_{u,i} x[u,i] * log x[u,i]
    subject to x @ 1 = K * 1,   1^T @ x = |U| * e*,   x >= 0

with C[u, i] = gamma_i * w[u, i]. Its solution factors as
diag(m) @ B @ diag(n) with kernel B = exp(C / lambda_ot); the sign is
fixed by the objective (mass must flow toward high scores, so higher C
means a larger kernel entry). Column targets are scaled by |U| because
rows carry K units per user while e* sums to K across items; scaling the
column side is the only choice that leaves the transport polytope
nonempty. Scaling updates alternate

    m <- K * 1 (/) B @ n        n <- |U| * e* (/) B^T @ m

until both marginal L1 errors fall below 1e-6. When any scaling factor
leaves [1e-300, 1e300] (small lambda_ot with spread-out scores), the run
restarts in log domain using log-sum-exp updates. This module uses no
randomness: identical inputs produce bitwise-identical output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import (
    ConvergenceError,
    ExposureVector,
    FairtaxError,
    RankingConfig,
    RankingProbabilities,
    ScoreMatrix,
    ValidationError,
)

MAX_ITERATIONS = 1000

# Converged when max(row, column) L1 marginal error drops below this.
CONVERGENCE_TOL = 1e-6

# Residual above this after the iteration cap is a hard failure.
FAILURE_TOL = 1e-3

_SCALE_LO = 1e-300
_SCALE_HI = 1e300

# Warn when clamping to [0, 1] moves more than this fraction of the K*|U|
# total mass; the entropy term bounds x below, not above.
CLAMP_WARN_FRACTION = 1e-3


@dataclass(frozen=True)
class SinkhornState:
    """Diagnostics of one Sinkhorn run.

    m and n are the row/column scalings of the scaling stage in linear
    domain; when log_domain is True they hold the logarithms instead (the
    linear values may not be representable). error_history records the L1
    marginal error after each scaling iteration; clamped_mass is the total
    probability mass moved by the clamp to [0, 1]; refine_iterations counts
    capped-scaling sweeps spent restoring marginal feasibility after a
    material clamp (0 when the clamp was immaterial). marginal_error is the
    L1 marginal error of the matrix actually returned.
    """

    m: np.ndarray
    n: np.ndarray
    log_domain: bool
    iterations_run: int
    marginal_error: float
    error_history: np.ndarray
    clamped_mass: float
    refine_iterations: int = 0


def _bad_scaling(vec: np.ndarray) -> bool:
    if not np.all(np.isfinite(vec)):
        return True
    return bool(vec.max() > _SCALE_HI or vec.min() < _SCALE_LO)


def _linear_sinkhorn(B, k, col_target, n_init):
    """Alternating scaling in linear domain; None signals overflow."""
    n = n_init.copy()
    history = []
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        Bn = B @ n
        iterations = 0
        err = np.inf
        for iterations in range(1, MAX_ITERATIONS + 1):
            if _bad_scaling(Bn):
                return None
            m = k / Bn
            Btm = B.T @ m
            n = col_target / Btm
            if _bad_scaling(m) or _bad_scaling(n):
                return None
            Bn = B @ n
            row_err = float(np.abs(m * Bn - k).sum())
            col_err = float(np.abs(n * Btm - col_target).sum())
            err = max(row_err, col_err)
            history.append(err)
            if err < CONVERGENCE_TOL:
                break
    return m, n, iterations, err, np.asarray(history)


def _log_sinkhorn(logB, k, col_target, n_init):
    """Log-sum-exp scaling; immune to over- and underflow."""
    log_k = np.log(k)
    log_col = np.log(col_target)
    ln = np.log(n_init)
    history = []
    lBn = logsumexp(logB + ln[None, :], axis=1)
    iterations = 0
    err = np.inf
    for iterations in range(1, MAX_ITERATIONS + 1):
        lm = log_k - lBn
        lBtm = logsumexp(logB + lm[:, None], axis=0)
        ln = log_col - lBtm
        lBn = logsumexp(logB + ln[None, :], axis=1)
        row_err = float(np.abs(np.exp(lm + lBn) - k).sum())
        col_err = float(np.abs(np.exp(ln + lBtm) - col_target).sum())
        err = max(row_err, col_err)
        history.append(err)
        if err < CONVERGENCE_TOL:
            break
    return lm, ln, iterations, err, np.asarray(history)


def _fit_rows_capped(x: np.ndarray, k: float) -> np.ndarray:
    """Exact KL projection of every row onto {sum = k, entries in [0, 1]}.

    The projection has the form min(theta * row, 1); with the c largest
    entries capped, theta = (k - c) / (sum of the rest), so the right c is
    found by scanning c = 0..k on sorted prefix sums.
    """
    num_rows, width = x.shape
    desc = -np.sort(-x, axis=1)
    prefix = np.concatenate([np.zeros((num_rows, 1)), np.cumsum(desc, axis=1)], axis=1)
    total = prefix[:, -1]
    theta = np.full(num_rows, -1.0)
    kk = int(round(k))
    for c in range(0, min(kk, width - 1) + 1):
        rest = np.maximum(total - prefix[:, c], 1e-300)
        cand = (k - c) / rest
        ok_low = cand * desc[:, c - 1] >= 1.0 - 1e-12 if c > 0 else np.ones(num_rows, bool)
        ok_high = cand * desc[:, c] < 1.0 + 1e-12 if c < width else np.ones(num_rows, bool)
        take = (theta < 0) & ok_low & ok_high
        theta[take] = cand[take]
    if np.any(theta < 0):
        raise FairtaxError("internal error: capped row fit found no scaling")
    return np.minimum(x * theta[:, None], 1.0)


def _fit_cols_capped(x: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Exact KL projection of every column onto {sum = target, entries in [0, 1]}."""
    num_rows, width = x.shape
    desc = -np.sort(-x, axis=0)
    prefix = np.concatenate([np.zeros((1, width)), np.cumsum(desc, axis=0)], axis=0)
    total = prefix[-1, :]
    theta = np.full(width, -1.0)
    max_c = min(int(np.floor(targets.max() + 1e-12)), num_rows - 1)
    for c in range(0, max_c + 1):
        rest = np.maximum(total - prefix[c, :], 1e-300)
        cand = (targets - c) / rest
        ok_low = cand * desc[c - 1, :] >= 1.0 - 1e-12 if c > 0 else np.ones(width, bool)
        ok_high = cand * desc[c, :] < 1.0 + 1e-12 if c < num_rows else np.ones(width, bool)
        take = (theta < 0) & (targets >= c) & ok_low & ok_high
        theta[take] = cand[take]
    if np.any(theta < 0):
        raise FairtaxError("internal error: capped column fit found no scaling")
    return np.minimum(x * theta[None, :], 1.0)


def _capped_refine(x: np.ndarray, k: float, col_target: np.ndarray):
    """Restore marginal feasibility inside the box [0, 1] by alternating
    exact capped fits of rows and columns.

    The box-constrained transport polytope is never empty (the plan that
    repeats the column targets divided by |U| in every row is feasible), so
    the alternation converges; it is only invoked when clamping to [0, 1]
    materially broke the plain scaling solution.
    """
    err = np.inf
    iterations = 0
    for iterations in range(1, MAX_ITERATIONS + 1):
        x = _fit_rows_capped(x, k)
        x = _fit_cols_capped(x, col_target)
        row_err = float(np.abs(x.sum(axis=1) - k).sum())
        col_err = float(np.abs(x.sum(axis=0) - col_target).sum())
        err = max(row_err, col_err)
        if err < CONVERGENCE_TOL:
            break
    return x, iterations, err


def _marginal_error(x: np.ndarray, k: float, col_target: np.ndarray) -> float:
    row_err = float(np.abs(x.sum(axis=1) - k).sum())
    col_err = float(np.abs(x.sum(axis=0) - col_target).sum())
    return max(row_err, col_err)


def project_with_state(
    scores: ScoreMatrix,
    e_star: ExposureVector,
    config: RankingConfig,
) -> tuple[RankingProbabilities, SinkhornState]:
    """Sinkhorn projection returning the probabilities plus run diagnostics."""
    if e_star.num_items != scores.num_items:
        raise ValidationError(
            f"item axis mismatch: exposure vector has {e_star.num_items} entries, "
            f"scores have {scores.num_items} items")
    if config.k > scores.num_items:
        raise ValidationError(
            f"k={config.k} exceeds the number of items {scores.num_items}")
    e_star.validate_total(config.k)

    k = float(config.k)
    num_users = scores.num_users
    e = e_star.e
    # Rescale so the column mass is exactly K * |U|: the row side is exact
    # by definition and e* carries up to 1e-8 solver slack. The rescaling
    # may nudge saturated columns (e_i = 1) past their box capacity |U|;
    # cap them and hand the sliver to columns with headroom.
    col_target = e * (num_users * k / e.sum())
    over = col_target > num_users
    if np.any(over):
        excess = float((col_target - num_users)[over].sum())
        col_target = np.minimum(col_target, num_users)
        headroom = num_users - col_target
        room = float(headroom.sum())
        if room > 0:
            col_target = col_target + headroom * (excess / room)
    logB = scores.effective_scores() / config.lambda_ot

    result = None
    log_domain = False
    with np.errstate(over="ignore"):
        B = np.exp(logB)
    if np.all(np.isfinite(B)):
        result = _linear_sinkhorn(B, k, col_target, e)
    if result is None:
        log_domain = True
        result = _log_sinkhorn(logB, k, col_target, e)
    m, n, iterations, err, history = result

    if err > FAILURE_TOL:
        raise ConvergenceError(
            f"sinkhorn failed to converge: marginal L1 error {err:.3e} "
            f"after {iterations} iterations",
            residual=err, iterations=iterations)

    if log_domain:
        x = np.exp(m[:, None] + logB + n[None, :])
    else:
        x = (m[:, None] * B) * n[None, :]

    over = np.clip(x - 1.0, 0.0, None).sum()
    under = np.clip(-x, 0.0, None).sum()
    clamped = float(over + under)
    np.clip(x, 0.0, 1.0, out=x)
    if clamped > CLAMP_WARN_FRACTION * k * num_users:
        warnings.warn(
            f"clamped {clamped:.3g} units of probability mass to [0, 1] "
            f"({clamped / (k * num_users):.2%} of total); consider a larger "
            f"lambda_ot", RuntimeWarning, stacklevel=2)

    # Clamping can break the marginals (the scaling stage ignores the cap);
    # restore feasibility inside the box when the damage is material.
    err = _marginal_error(x, k, col_target)
    refine_iterations = 0
    if err >= CONVERGENCE_TOL:
        x, refine_iterations, err = _capped_refine(x, k, col_target)

    if err > FAILURE_TOL:
        raise ConvergenceError(
            f"sinkhorn projection infeasible: marginal L1 error {err:.3e} "
            f"after clamping and {refine_iterations} capped sweeps",
            residual=err, iterations=iterations)
    if err >= CONVERGENCE_TOL:
        warnings.warn(
            f"sinkhorn stopped at marginal L1 error {err:.3e} (above "
            f"{CONVERGENCE_TOL:g})", RuntimeWarning, stacklevel=2)

    probs = RankingProbabilities(x)
    state = SinkhornState(
        m=m, n=n, log_domain=log_domain, iterations_run=iterations,
        marginal_error=err, error_history=history, clamped_mass=clamped,
        refine_iterations=refine_iterations)
    return probs, state


def project(
    scores: ScoreMatrix,
    e_star: ExposureVector,
    config: RankingConfig,
) -> RankingProbabilities:
    """Project e* onto per-user top-K inclusion probabilities."""
    probs, _ = project_with_state(scores, e_star, config)
    return probs


def transport_cost(probs: RankingProbabilities, scores: ScoreMatrix) -> float:
    """Score mass captured by the plan: sum_{u,i} x[u,i] * gamma_i * w[u,i]."""
    if probs.x.shape != scores.w.shape:
        raise ValidationError(
            f"shape mismatch: probabilities {probs.x.shape} vs scores {scores.w.shape}")
    return float((probs.x * scores.effective_scores()).sum())
