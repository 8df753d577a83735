"""Tail bounds for martingale difference sequences.

All three return probabilities clamped to [0, 1]; pass ``raw=True`` to get
the unclamped expression (the max-of-windows bound exceeds 1 for small z).
"""

from __future__ import annotations

import math


def _nonneg(**kw) -> None:
    for name, v in kw.items():
        if not v >= 0:
            raise ValueError(f"{name} must be >= 0, got {v}")


def _clamp(v: float, raw: bool) -> float:
    return v if raw else min(1.0, v)


def bernstein_bound(z: float, V: float, b: float, raw: bool = False) -> float:
    """``P(S_N >= z) <= exp(-z^2 / (2V + 2bz/3))`` for increments ``Y <= b``
    with conditional variances summing to at most ``V``."""
    _nonneg(z=z, V=V, b=b)
    if z == 0:
        return 1.0
    denom = 2.0 * V + 2.0 * b * z / 3.0
    if denom <= 0:
        raise ValueError("bound undefined for z > 0 with V = b = 0")
    return _clamp(math.exp(-z * z / denom), raw)


def azuma_max_bound(z: float, sum_sq_ranges: float, raw: bool = False) -> float:
    """``P(max_m S_m >= z) <= exp(-2 z^2 / sum_k (b_k - a_k)^2)``."""
    _nonneg(z=z, sum_sq_ranges=sum_sq_ranges)
    if z == 0:
        return 1.0
    if sum_sq_ranges == 0:
        return 0.0
    return _clamp(math.exp(-2.0 * z * z / sum_sq_ranges), raw)


def azuma_maxmax_bound(z: float, sum_sq_ranges: float, raw: bool = False) -> float:
    """Bound on the largest window sum, ``max_{s <= t} sum_{k=s}^t Y_k >= z``:
    ``2 exp(-z^2 / (2 sum_k (b_k - a_k)^2))``."""
    _nonneg(z=z, sum_sq_ranges=sum_sq_ranges)
    if z == 0:
        return _clamp(2.0, raw)
    if sum_sq_ranges == 0:
        return 0.0
    return _clamp(2.0 * math.exp(-z * z / (2.0 * sum_sq_ranges)), raw)
