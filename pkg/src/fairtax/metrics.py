"""Accuracy and fairness measurement: eCN@K, eCPM@K, Gini@K, Lorenz
curves, price of taxation and its reference bound curve."""

from __future__ import annotations

import math

import numpy as np

from .core import DegenerateProblemError, UtilityVector, ValidationError


def ecn(v: UtilityVector, num_users: int) -> float:
    """Expected click/exposure number per user: sum_i v_i / |U|."""
    if num_users <= 0:
        raise ValidationError(f"num_users must be > 0, got {num_users}")
    return float(v.v.sum() / num_users)


def ecpm(v: UtilityVector, bids: np.ndarray | None, num_users: int) -> float:
    """Bid-weighted revenue per user: sum_i bid_i * v_i / |U|."""
    if num_users <= 0:
        raise ValidationError(f"num_users must be > 0, got {num_users}")
    if bids is None:
        raise ValidationError("bids required for eCPM")
    bids = np.asarray(bids, dtype=float)
    if bids.shape != v.v.shape:
        raise ValidationError(
            f"item axis mismatch: bids has shape {bids.shape}, "
            f"utilities have {v.v.shape[0]} items")
    if np.any(bids <= 0) or not np.all(np.isfinite(bids)):
        raise ValidationError("bids must be finite and > 0")
    return float((bids * v.v).sum() / num_users)


def _weighted(v: UtilityVector, gamma: np.ndarray) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != v.v.shape:
        raise ValidationError(
            f"item axis mismatch: gamma has shape {gamma.shape}, "
            f"utilities have {v.v.shape[0]} items")
    return v.v * gamma


def gini(v: UtilityVector, gamma: np.ndarray) -> float:
    """Weighted Gini index sum_{i,j} |s_i - s_j| / (2 n sum_i s_i), s = gamma*v.

    Uses the sorted prefix-sum identity sum_i (2i - n - 1) s_(i) / (n sum s),
    which is O(n log n) and agrees with the naive double sum to machine
    precision.
    """
    s = np.sort(_weighted(v, gamma))
    total = float(s.sum())
    if total <= 0:
        raise DegenerateProblemError("Gini undefined: weighted utilities sum to zero")
    n = s.size
    ranks = np.arange(1, n + 1)
    g = float(((2 * ranks - n - 1) * s).sum() / (n * total))
    return 0.0 if -1e-12 < g < 0.0 else g


def lorenz_points(v: UtilityVector, gamma: np.ndarray) -> np.ndarray:
    """Lorenz polygon of weighted utilities, ascending; shape (n+1, 2).

    Point k is (k/n, share of total weighted utility held by the bottom k
    items); the curve starts at (0, 0) and ends at exactly (1, 1).
    """
    s = np.sort(_weighted(v, gamma))
    total = float(s.sum())
    if total <= 0:
        raise DegenerateProblemError("Lorenz curve undefined: weighted utilities sum to zero")
    n = s.size
    ys = np.concatenate(([0.0], np.cumsum(s))) / total
    ys[-1] = 1.0
    xs = np.arange(n + 1) / n
    return np.column_stack((xs, ys))


def pot(acc_at_zero: float, acc_at_t: float) -> float:
    """Price of taxation: relative accuracy lost versus the untaxed run."""
    if not acc_at_zero > 0:
        raise ValidationError(
            f"price of taxation needs a positive baseline accuracy, got {acc_at_zero}")
    return (acc_at_zero - acc_at_t) / acc_at_zero


def pot_bound(num_users: int, t: float) -> float:
    """Reference curve 1 - |U|^(-t/(1+t)) for the price of taxation.

    The constant factor is taken as 1, so this is a shape reference to
    overlay against measured POT, not a certified bound.
    """
    if num_users < 1:
        raise ValidationError(f"num_users must be >= 1, got {num_users}")
    if t < 0 or math.isnan(t):
        raise ValidationError(f"t must be >= 0, got {t}")
    if math.isinf(t):
        return 1.0 - 1.0 / num_users
    return 1.0 - float(num_users) ** (-t / (1.0 + t))
