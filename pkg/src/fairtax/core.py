"""Shared domain types for the fair exposure re-ranking pipeline.

Users index rows and items index columns everywhere. Arrays are coerced to
float64 (int64 for ranking lists) and marked read-only on construction, so
instances are immutable and safe to share across threads. All operations
here are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

Mode = Literal["exposure", "ctr"]

MODES: tuple[str, ...] = ("exposure", "ctr")


class FairtaxError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(FairtaxError, ValueError):
    """A domain-type invariant or an operation precondition was violated."""


class DegenerateProblemError(FairtaxError, ValueError):
    """The instance admits no meaningful answer (e.g. all-zero scores)."""


class ConvergenceError(FairtaxError, RuntimeError):
    """An iterative solver stopped above its failure tolerance."""

    def __init__(self, message: str, residual: float | None = None,
                 iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InputFormatError(FairtaxError, ValueError):
    """A data file could not be parsed; the message carries path and line."""


def check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScoreMatrix:
    """Dense user-item relevance weights plus per-item weights and bids.

    w[u, i] is the relevance weight of item i for user u: a CTR estimate in
    [0, 1] for ctr-mode data, or 1.0 for every pair in exposure-mode data.
    gamma[i] is a strictly positive item weight (1.0 by convention for
    recommendation, log(bid) for advertising). bids, when present, holds
    the raw positive bid values gamma was derived from.
    """

    w: np.ndarray
    gamma: np.ndarray
    bids: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if w.ndim != 2:
            raise ValidationError(f"w must be 2-D (users x items), got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValidationError("w contains non-finite entries")
        if np.any(w < 0):
            raise ValidationError("w contains negative entries")
        gamma = np.array(self.gamma, dtype=float)
        if gamma.shape != (w.shape[1],):
            raise ValidationError(
                f"item axis mismatch: gamma has shape {gamma.shape}, "
                f"w has {w.shape[1]} items")
        if not np.all(np.isfinite(gamma)) or np.any(gamma <= 0):
            raise ValidationError("gamma entries must be finite and > 0")
        bids = self.bids
        if bids is not None:
            bids = np.array(bids, dtype=float)
            if bids.shape != (w.shape[1],):
                raise ValidationError(
                    f"item axis mismatch: bids has shape {bids.shape}, "
                    f"w has {w.shape[1]} items")
            if not np.all(np.isfinite(bids)) or np.any(bids <= 0):
                raise ValidationError("bids must be finite and > 0")
            _freeze(bids)
        object.__setattr__(self, "w", _freeze(w))
        object.__setattr__(self, "gamma", _freeze(gamma))
        object.__setattr__(self, "bids", bids)

    @property
    def num_users(self) -> int:
        return self.w.shape[0]

    @property
    def num_items(self) -> int:
        return self.w.shape[1]

    def effective_scores(self) -> np.ndarray:
        """Per-pair ranking score gamma[i] * w[u, i] used throughout."""
        return self.w * self.gamma[None, :]


def check_ctr_range(scores: ScoreMatrix) -> None:
    """Reject matrices whose weights exceed 1 when treated as CTR values."""
    if np.any(scores.w > 1.0 + 1e-12):
        raise ValidationError(
            f"ctr mode requires w <= 1, found max {float(scores.w.max()):g}")


@dataclass(frozen=True)
class RankingConfig:
    """Pipeline knobs: list size K, tax rate t, entropy coefficient, seed."""

    k: int
    tax_rate: float = 0.0
    lambda_ot: float = 1.0
    seed: int = 0
    mode: Mode = "ctr"

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if not np.isfinite(self.tax_rate) or self.tax_rate < 0:
            raise ValidationError(f"tax_rate must be finite and >= 0, got {self.tax_rate}")
        if not np.isfinite(self.lambda_ot) or self.lambda_ot <= 0:
            raise ValidationError(f"lambda_ot must be > 0, got {self.lambda_ot}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must fit in an unsigned 64-bit integer")
        check_mode(self.mode)


@dataclass(frozen=True)
class ExposureVector:
    """Relaxed per-user exposure share e[i] in [0, 1] with sum(e) = K."""

    e: np.ndarray

    def __post_init__(self):
        e = np.array(self.e, dtype=float)
        if e.ndim != 1:
            raise ValidationError(f"e must be 1-D, got shape {e.shape}")
        if not np.all(np.isfinite(e)):
            raise ValidationError("e contains non-finite entries")
        if np.any(e < -1e-12) or np.any(e > 1.0 + 1e-9):
            raise ValidationError("e entries must lie in [0, 1]")
        np.clip(e, 0.0, 1.0, out=e)
        object.__setattr__(self, "e", _freeze(e))

    @property
    def num_items(self) -> int:
        return self.e.shape[0]

    def total(self) -> float:
        return float(self.e.sum())

    def validate_total(self, k: int, tol: float = 1e-8) -> None:
        total = self.total()
        if abs(total - k) > tol:
            raise ValidationError(
                f"exposure total {total!r} deviates from K={k} by more than {tol:g}")


@dataclass(frozen=True)
class RankingProbabilities:
    """Marginal inclusion probabilities x[u, i] of item i in user u's list.

    Rows sum to K and column j sums to num_users * e*[j] for the exposure
    vector the matrix was projected onto. Entries are accepted with 1e-9
    numerical slack around [0, 1] and clamped on construction.
    """

    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim != 2:
            raise ValidationError(f"x must be 2-D (users x items), got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("x contains non-finite entries")
        if np.any(x < -1e-9) or np.any(x > 1.0 + 1e-9):
            raise ValidationError("x entries must lie in [0 - 1e-9, 1 + 1e-9]")
        np.clip(x, 0.0, 1.0, out=x)
        object.__setattr__(self, "x", _freeze(x))

    @property
    def num_users(self) -> int:
        return self.x.shape[0]

    @property
    def num_items(self) -> int:
        return self.x.shape[1]

    def row_sums(self) -> np.ndarray:
        return self.x.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.x.sum(axis=0)

    def validate_rows(self, k: int, tol: float = 1e-6) -> None:
        err = np.abs(self.row_sums() - k).max()
        if err > tol:
            raise ValidationError(f"row sums deviate from K={k} by up to {err:g}")

    def validate_cols(self, target: np.ndarray, tol: float = 1e-6) -> None:
        err = np.abs(self.col_sums() - np.asarray(target, dtype=float)).max()
        if err > tol:
            raise ValidationError(f"column sums deviate from target by up to {err:g}")


@dataclass(frozen=True)
class RankingLists:
    """Per-user ordered lists of K distinct item indices (num_users x K)."""

    lists: np.ndarray

    def __post_init__(self):
        lists = np.array(self.lists)
        if lists.ndim != 2:
            raise ValidationError(f"lists must be 2-D (users x K), got shape {lists.shape}")
        if not np.issubdtype(lists.dtype, np.integer):
            as_int = lists.astype(np.int64)
            if np.any(as_int != lists):
                raise ValidationError("list entries must be integral item indices")
            lists = as_int
        else:
            lists = lists.astype(np.int64)
        if lists.size and lists.min() < 0:
            raise ValidationError("list entries must be nonnegative item indices")
        if lists.shape[1] > 1:
            rows_sorted = np.sort(lists, axis=1)
            if np.any(np.diff(rows_sorted, axis=1) == 0):
                raise ValidationError("lists contain repeated items within a row")
        object.__setattr__(self, "lists", _freeze(lists))

    @property
    def num_users(self) -> int:
        return self.lists.shape[0]

    @property
    def k(self) -> int:
        return self.lists.shape[1]

    def validate_items(self, num_items: int) -> None:
        if self.lists.size and self.lists.max() >= num_items:
            raise ValidationError(
                f"item axis mismatch: list entry {int(self.lists.max())} out of "
                f"range for {num_items} items")


@dataclass(frozen=True)
class UtilityVector:
    """Accumulated nonnegative per-item utility (clicks or exposures)."""

    v: np.ndarray

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        if v.ndim != 1:
            raise ValidationError(f"v must be 1-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValidationError("utilities must be finite and >= 0")
        object.__setattr__(self, "v", _freeze(v))

    @property
    def num_items(self) -> int:
        return self.v.shape[0]

    def total(self) -> float:
        return float(self.v.sum())


@dataclass(frozen=True)
class TradeoffPoint:
    """One row of a tax-rate sweep: accuracy and fairness at a given t."""

    tax_rate: float
    ecn: float
    ecpm: Optional[float]
    gini: float
    pot: float

    def __post_init__(self):
        if not -1e-12 <= self.gini <= 1.0 + 1e-12:
            raise ValidationError(f"gini must lie in [0, 1], got {self.gini}")
        if self.pot > 1.0 + 1e-12:
            raise ValidationError(f"pot cannot exceed 1, got {self.pot}")


def _check_lists_dims(scores: ScoreMatrix, lists: RankingLists) -> None:
    if lists.num_users != scores.num_users:
        raise ValidationError(
            f"user axis mismatch: lists have {lists.num_users} rows, "
            f"scores have {scores.num_users} users")
    lists.validate_items(scores.num_items)


def compute_utilities(scores: ScoreMatrix, lists: RankingLists, mode: Mode) -> UtilityVector:
    """Accumulate realized item utilities over the given ranking lists.

    v[i] counts one unit per appearance of item i in exposure mode, and
    w[u, i] units per appearance in ctr mode.
    """
    check_mode(mode)
    _check_lists_dims(scores, lists)
    cols = lists.lists.ravel()
    if mode == "exposure":
        v = np.bincount(cols, minlength=scores.num_items).astype(float)
    else:
        rows = np.repeat(np.arange(lists.num_users), lists.k)
        v = np.bincount(cols, weights=scores.w[rows, cols], minlength=scores.num_items)
    return UtilityVector(v)


def expected_utilities(scores: ScoreMatrix, probs: RankingProbabilities, mode: Mode) -> UtilityVector:
    """Expected item utilities under marginal inclusion probabilities."""
    check_mode(mode)
    if probs.num_users != scores.num_users:
        raise ValidationError(
            f"user axis mismatch: probabilities have {probs.num_users} rows, "
            f"scores have {scores.num_users} users")
    if probs.num_items != scores.num_items:
        raise ValidationError(
            f"item axis mismatch: probabilities have {probs.num_items} columns, "
            f"scores have {scores.num_items} items")
    if mode == "exposure":
        v = probs.x.sum(axis=0)
    else:
        v = (probs.x * scores.w).sum(axis=0)
    return UtilityVector(np.maximum(v, 0.0))
