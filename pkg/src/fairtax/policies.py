"""Baseline ranking policies: accuracy-first top-K and the additive
per-item tax family (score s[u, i] = gamma_i * w[u, i] + mu_i).

The per-item tax value mu is exposed directly rather than solved from a
fairness function; greedy_popularity_tax supplies one concrete schedule
that taxes items by the utility they have accumulated so far. Selection is
argmax-based, so these policies are the jumpy comparison point: a sweep of
the tax rate moves metrics in discrete steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Mode,
    RankingLists,
    ScoreMatrix,
    ValidationError,
    check_mode,
)


@dataclass(frozen=True)
class ItemTaxPolicy:
    """Additive per-item tax/subsidy mu (same units as gamma * w) and the
    tax rate lam it was derived from (bookkeeping only)."""

    mu: np.ndarray
    lam: float = 0.0

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        if mu.ndim != 1:
            raise ValidationError(f"mu must be 1-D, got shape {mu.shape}")
        if not np.all(np.isfinite(mu)):
            raise ValidationError("mu must be finite")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValidationError(f"lam must be finite and >= 0, got {self.lam}")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)


def _check_k(scores: ScoreMatrix, k: int) -> None:
    if not 1 <= k <= scores.num_items:
        raise ValidationError(
            f"k must satisfy 1 <= k <= {scores.num_items}, got {k}")


def _select_rows(s: np.ndarray, k: int) -> np.ndarray:
    # Stable argsort of -s: descending score, ties toward the lower index.
    return np.argsort(-s, axis=1, kind="stable")[:, :k]


def top_k(scores: ScoreMatrix, k: int) -> RankingLists:
    """Accuracy-first lists: the K items maximizing gamma_i * w[u, i]."""
    _check_k(scores, k)
    return RankingLists(_select_rows(scores.effective_scores(), k))


def taxed_top_k(scores: ScoreMatrix, policy: ItemTaxPolicy, k: int) -> RankingLists:
    """Top-K by the taxed score gamma_i * w[u, i] + mu_i."""
    _check_k(scores, k)
    if policy.mu.shape != (scores.num_items,):
        raise ValidationError(
            f"item axis mismatch: mu has shape {policy.mu.shape}, "
            f"scores have {scores.num_items} items")
    return RankingLists(_select_rows(scores.effective_scores() + policy.mu[None, :], k))


def greedy_popularity_tax(
    scores: ScoreMatrix,
    lam: float,
    k: int,
    mode: Mode = "exposure",
) -> RankingLists:
    """Sequential taxed selection with mu_i = -lam * (utility so far).

    Users are processed in ascending index order (output depends on it);
    after each user the running utility of the selected items grows by 1 in
    exposure mode or by w[u, i] in ctr mode. Large lam cycles items
    round-robin style.
    """
    _check_k(scores, k)
    check_mode(mode)
    if not np.isfinite(lam) or lam < 0:
        raise ValidationError(f"lam must be finite and >= 0, got {lam}")
    base = scores.effective_scores()
    running = np.zeros(scores.num_items)
    out = np.empty((scores.num_users, k), dtype=np.int64)
    for u in range(scores.num_users):
        sel = np.argsort(-(base[u] - lam * running), kind="stable")[:k]
        out[u] = sel
        running[sel] += 1.0 if mode == "exposure" else scores.w[u, sel]
    return RankingLists(out)
