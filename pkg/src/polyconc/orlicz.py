"""Orlicz psi_alpha quasinorms: exact, empirical and moment-growth estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .distributions import LOG2, DistributionSpec, NotEvaluableError

__all__ = [
    "DistributionSpec",
    "OrliczEstimate",
    "InfinitePsiNormError",
    "NotEvaluableError",
    "psi_norm_exact",
    "psi_norm_empirical",
    "psi_norm_moment_sandwich",
    "psi_product_bound",
    "psi_center_bound",
    "lower_growth_constant",
    "upper_growth_constant",
    "T_MIN",
    "T_MAX",
    "SANDWICH_GRID",
]

T_MIN = 1e-8
T_MAX = 1e8
SANDWICH_GRID = tuple(2.0**k for k in range(7))  # 1, 2, 4, ..., 64
METHODS = ("mgf_root", "empirical", "sandwich")


class InfinitePsiNormError(ValueError):
    """``E exp(|X|^alpha / t^alpha)`` exceeds 2 for every admissible t."""


@dataclass(frozen=True)
class OrliczEstimate:
    value: float
    method: str
    error_radius: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.value >= 0:
            raise ValueError("value must be >= 0")
        if not self.error_radius >= 0:
            raise ValueError("error_radius must be >= 0")

    def __float__(self):
        return float(self.value)


def _bisect_log_t(objective: Callable[[float], float], rtol: float) -> tuple[float, float]:
    """Root of ``objective(t) = log 2`` for a decreasing objective, searched in log t."""
    lo, hi = math.log(T_MIN), math.log(T_MAX)
    if objective(T_MAX) > LOG2:
        raise InfinitePsiNormError(f"objective exceeds 2 for all t up to {T_MAX:g}")
    if objective(T_MIN) <= LOG2:
        return T_MIN, T_MIN
    while hi - lo > rtol:
        mid = 0.5 * (lo + hi)
        if objective(math.exp(mid)) > LOG2:
            lo = mid
        else:
            hi = mid
    t = math.exp(0.5 * (lo + hi))
    return t, t * math.expm1(0.5 * (hi - lo))


def psi_norm_exact(dist: DistributionSpec, rtol: float = 1e-13) -> OrliczEstimate:
    """psi_alpha norm of ``dist`` (with ``alpha = dist.alpha``) from its MGF.

    Raises:
        InfinitePsiNormError: the norm is infinite (or beyond ``T_MAX``).
        NotEvaluableError: no evaluable expression for the MGF.
    """
    t, radius = _bisect_log_t(dist.log_psi_objective, rtol)
    return OrliczEstimate(t, "mgf_root", radius)


def psi_norm_empirical(
    samples: Iterable[float], alpha: float, tolerance: float = 1e-10
) -> OrliczEstimate:
    """Root of the empirical mean of ``exp(|x|^alpha / t^alpha)`` against 2."""
    x = np.abs(np.asarray(samples, dtype=float)).ravel()
    if x.size == 0:
        raise ValueError("need at least one sample")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    n_all = x.size
    x = x[x > 0]
    if x.size == 0:
        return OrliczEstimate(0.0, "empirical", 0.0)
    # zeros contribute exp(0) = 1 each
    n_zero = n_all - x.size
    log_xa = alpha * np.log(x)
    log_n = math.log(n_all)

    def objective(t):
        terms = np.exp(log_xa - alpha * math.log(t))
        if n_zero:
            return float(np.logaddexp(logsumexp(terms), math.log(n_zero)) - log_n)
        return float(logsumexp(terms) - log_n)

    # bracket around the largest sample: the root lies in [max|x| / (log 2N)^(1/a), max|x| / (log 2)^(1/a)]
    xmax = float(x.max())
    lo = xmax / math.log(2.0 * n_all) ** (1 / alpha) * 0.999
    hi = xmax / LOG2 ** (1 / alpha) * 1.001
    a, b = math.log(lo), math.log(hi)
    rtol = tolerance
    while b - a > rtol:
        mid = 0.5 * (a + b)
        if objective(math.exp(mid)) > LOG2:
            a = mid
        else:
            b = mid
    t = math.exp(0.5 * (a + b))
    return OrliczEstimate(t, "empirical", t * math.expm1(0.5 * (b - a)))


def lower_growth_constant(alpha: float) -> float:
    """``(alpha e)^(1/alpha) / 2``."""
    return (alpha * math.e) ** (1 / alpha) / 2


def upper_growth_constant(alpha: float) -> float:
    """``(2e)^(1/alpha)``."""
    return (2 * math.e) ** (1 / alpha)


def psi_norm_moment_sandwich(
    moment_oracle: Callable[[float], float],
    alpha: float,
    grid: Sequence[float] = SANDWICH_GRID,
) -> tuple[float, float]:
    """Bracket the psi_alpha norm through moment growth, for ``0 < alpha < 1``.

    Args:
        moment_oracle: ``p -> ||X||_p``.
        alpha: Orlicz exponent in (0, 1).
        grid: values of p >= 1 used to approximate the supremum.

    Returns:
        ``(lower, upper)`` with lower <= upper.
    """
    if not 0 < alpha < 1:
        raise ValueError("moment sandwich is only available for 0 < alpha < 1")
    if any(p < 1 for p in grid) or not grid:
        raise ValueError("grid must be non-empty with p >= 1")
    s = max(float(moment_oracle(p)) / p ** (1 / alpha) for p in grid)
    if s < 0 or not math.isfinite(s):
        raise ValueError("moment oracle returned an invalid value")
    return lower_growth_constant(alpha) * s, upper_growth_constant(alpha) * s


def psi_product_bound(norms: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Norm bound for a product of variables with norms ``(value, alpha)``.

    Returns ``(prod values, (sum 1/alpha_i)^-1)``.
    """
    if len(norms) == 0:
        raise ValueError("need at least one factor")
    value, inv = 1.0, 0.0
    for v, a in norms:
        if not v > 0:
            raise ValueError("norm values must be positive")
        if not 0 < a <= 1:
            raise ValueError("each alpha must lie in (0, 1]")
        value *= v
        inv += 1.0 / a
    return value, 1.0 / inv


def psi_center_bound(norm: float, alpha: float) -> float:
    """Bound on ``||X - E X||_psi_alpha`` given ``||X||_psi_alpha = norm``."""
    if norm < 0 or not alpha > 0:
        raise ValueError("need norm >= 0 and alpha > 0")
    d = lower_growth_constant(alpha)
    return 2 ** (1 / alpha) * (1 + (d * LOG2) ** (-1 / alpha)) * norm
