"""Systematic (Madow) sampling of fixed-size ranking lists whose item
inclusion frequencies match prescribed marginals exactly.

For one user with row probabilities p summing to K: permute the items with
a seeded random permutation, form cumulative sums c_0 = 0, ..., c_n = K,
draw a single uniform U in [0, 1), and select the items whose interval
[c_{j-1}, c_j) contains one of U, U+1, ..., U+K-1. Every item then enters
the list with probability exactly p_i, and because p_i <= 1 no item can be
selected twice. The permutation breaks the correlation structure between
adjacent items that systematic sampling would otherwise induce.

Sequential multinomial sampling without replacement does not realize these
marginals; this scheme does, which keeps expected metrics estimable
without bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    FairtaxError,
    Mode,
    RankingLists,
    RankingProbabilities,
    ScoreMatrix,
    ValidationError,
    check_mode,
    expected_utilities,
)

# Row sums may deviate from K by at most this much before sampling is refused.
ROW_SUM_TOL = 1e-3

# Rows per chunk when materializing many draws at once.
_CHUNK_CELLS = 2_000_000


def _rows_summing_to_k(p: np.ndarray, k: int) -> np.ndarray:
    """Renormalize each row to sum exactly K while keeping entries <= 1.

    Renormalization can push a near-1 entry slightly above 1; the excess is
    capped and handed to the row's remaining headroom so every cumulative
    interval stays no longer than 1 (the no-duplicate guarantee).
    """
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - k) > ROW_SUM_TOL):
        worst = float(np.abs(sums - k).max())
        raise ValidationError(
            f"infeasible marginals: row sums deviate from K={k} by up to {worst:g}")
    q = p * (k / sums)[:, None]
    np.clip(q, None, 1.0, out=q)
    deficit = k - q.sum(axis=1)
    headroom = 1.0 - q
    headroom_total = headroom.sum(axis=1)
    scale = np.divide(deficit, headroom_total,
                      out=np.zeros_like(deficit), where=headroom_total > 0)
    return q + headroom * scale[:, None]


def sample_lists(
    probs: RankingProbabilities,
    seed,
    scores: ScoreMatrix | None = None,
) -> RankingLists:
    """Draw one size-K list per user with inclusion probabilities probs.x.

    Lists are ordered by descending ranking score gamma_i * w[u, i] when
    scores are given, by descending inclusion probability otherwise; ties
    break toward the lower item index. seed accepts anything
    numpy.random.default_rng does.
    """
    p = probs.x
    num_rows, num_items = p.shape
    k = int(round(float(np.median(p.sum(axis=1)))))
    if k < 1:
        raise ValidationError("rows must carry at least one unit of probability mass")
    q = _rows_summing_to_k(p, k)

    rng = np.random.default_rng(seed)
    perm = np.argsort(rng.random((num_rows, num_items)), axis=1, kind="stable")
    u0 = rng.random(num_rows)

    permuted = np.take_along_axis(q, perm, axis=1)
    cum = np.cumsum(permuted, axis=1)
    cum[:, -1] = k  # guard the last boundary against cumulative rounding
    hits = np.diff(np.ceil(cum - u0[:, None]), axis=1, prepend=0.0)
    mask = hits > 0.5
    if not np.all(mask.sum(axis=1) == k):
        raise FairtaxError("internal error: systematic draw missed the K-count")
    selected = perm[mask].reshape(num_rows, k)

    if scores is not None:
        if scores.w.shape != p.shape:
            raise ValidationError(
                f"shape mismatch: probabilities {p.shape} vs scores {scores.w.shape}")
        base = scores.effective_scores()
    else:
        base = p
    row_index = np.arange(num_rows)[:, None]
    sel_scores = base[row_index, selected]
    order = np.lexsort((selected, -sel_scores), axis=1)
    return RankingLists(np.take_along_axis(selected, order, axis=1))


@dataclass(frozen=True)
class SamplingReport:
    """Expected vs realized per-item utilities over repeated draws."""

    expected: np.ndarray
    realized_mean: np.ndarray
    std_error: np.ndarray
    z_scores: np.ndarray
    max_abs_z: float
    draws: int


def expected_vs_realized(
    probs: RankingProbabilities,
    scores: ScoreMatrix,
    draws: int,
    seed,
    mode: Mode = "exposure",
) -> SamplingReport:
    """Validation harness: average realized utilities over independent draws
    and compare against the expectation, with exact per-item z-scores.

    The inclusion indicator of item i for user u has variance
    p(1-p) per draw and draws are independent across users, so the
    standard error is analytic. Items with zero variance get z = 0 when
    they match exactly and +/- inf otherwise.
    """
    if draws < 1:
        raise ValidationError(f"draws must be >= 1, got {draws}")
    check_mode(mode)
    expected = expected_utilities(scores, probs, mode).v
    num_users, num_items = probs.x.shape
    k = int(round(float(np.median(probs.x.sum(axis=1)))))

    weights = np.ones_like(scores.w) if mode == "exposure" else scores.w
    var_one = ((weights ** 2) * probs.x * (1.0 - probs.x)).sum(axis=0)
    std_error = np.sqrt(np.maximum(var_one, 0.0) / draws)

    chunk = max(1, _CHUNK_CELLS // max(num_users * num_items, 1))
    seeds = iter(np.random.SeedSequence(seed).spawn(-(-draws // chunk)))
    totals = np.zeros(num_items)
    done = 0
    while done < draws:
        reps = min(chunk, draws - done)
        tiled = RankingProbabilities(np.tile(probs.x, (reps, 1)))
        lists = sample_lists(tiled, next(seeds))
        cols = lists.lists.ravel()
        if mode == "exposure":
            totals += np.bincount(cols, minlength=num_items)
        else:
            rows = np.repeat(np.arange(reps * num_users) % num_users, k)
            totals += np.bincount(cols, weights=scores.w[rows, cols],
                                  minlength=num_items)
        done += reps

    realized_mean = totals / draws
    diff = realized_mean - expected
    safe = np.where(std_error > 0, std_error, 1.0)
    z = np.where(std_error > 0, diff / safe,
                 np.where(np.abs(diff) <= 1e-9, 0.0, np.inf))
    return SamplingReport(
        expected=expected, realized_mean=realized_mean, std_error=std_error,
        z_scores=z, max_abs_z=float(np.abs(z).max()), draws=draws)
