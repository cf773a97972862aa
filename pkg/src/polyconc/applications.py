"""Ready-made bounds for norms of random vectors, projections, regression and related applications."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bounds import BoundError, TailBound, deviation_at_confidence, hanson_wright, quadratic_norms
from .distributions import DistributionSpec, poisson
from .orlicz import psi_norm_exact
from .polynomial import hoeffding_quadratic
from .tensors import DenseTensor

CONDITION_CAP = 1e12


@dataclass
class ApplicationReport:
    """A bound together with the value it is centered at and the admissible t-range."""

    bound: Optional[TailBound]
    centering: float
    validity_threshold: Optional[float] = None
    meta: dict = field(default_factory=dict)
    deviation: Optional[float] = None

    def probability(self, t):
        t_arr = np.asarray(t, dtype=float)
        if self.validity_threshold is not None and np.any(t_arr < self.validity_threshold):
            raise BoundError(f"bound only valid for t >= {self.validity_threshold!r}")
        if self.bound is None:
            raise BoundError("report carries a deviation level, not a tail bound")
        return self.bound.probability(t)


def _matrix(B) -> np.ndarray:
    m = np.asarray(B.values if isinstance(B, DenseTensor) else B, dtype=float)
    if m.ndim != 2:
        raise BoundError("need a matrix")
    return m


def _check_alpha(alpha: float) -> None:
    if not (0 < alpha <= 1 or alpha == 2):
        raise BoundError("alpha must lie in (0, 1] or equal 2")


def euclidean_norm_bound(
    B,
    alpha: float,
    M: float,
    c: float = 1.0,
    C: float = 1.0,
    variances: Optional[Sequence[float]] = None,
    quantile: bool = False,
) -> ApplicationReport:
    """Concentration of ``||B X||_2`` around ``||B||_HS`` (unit variances).

    With ``quantile=True`` the report instead bounds ``||B X||_2^2`` through the
    quadratic form with matrix ``B^T B``, centered at ``sum_i sigma_i^2 sum_j b_ji^2``.
    """
    m = _matrix(B)
    if not np.any(m):
        raise BoundError("B must be nonzero")
    if not M > 0 or not c > 0:
        raise BoundError("M and c must be positive")
    if quantile:
        sig2 = np.ones(m.shape[1]) if variances is None else np.asarray(variances, dtype=float)
        A = DenseTensor(m.T @ m)
        hw = hanson_wright(A, M, q=1, variances=sig2)
        centering = float(np.sum(sig2 * np.sum(m**2, axis=0)))
        return ApplicationReport(
            hw.with_constant(C), centering, None,
            {"source": "norm_quantile", "M": M, "norms": hw.meta["norms"]},
        )
    _check_alpha(alpha)
    op = float(np.linalg.norm(m, 2))
    hs = float(np.linalg.norm(m))
    factor = min(c ** (2 - alpha), 1.0)
    scale = M ** (4 / alpha) * op / factor ** (1 / alpha)
    bound = TailBound(((scale, float(alpha)),), 2.0, C, {"source": "euclidean_norm", "alpha": alpha, "M": M, "c": c})
    threshold = None if alpha == 2 else c * hs
    return ApplicationReport(bound, hs, threshold, {"source": "euclidean_norm", "op": op, "hs": hs})


def projection_distance_bounds(
    kind: str,
    n: int,
    m: Optional[int] = None,
    d: Optional[int] = None,
    sigmas: Optional[Sequence[float]] = None,
    alpha: float = 1.0,
    M: float = 1.0,
    C: float = 1.0,
) -> ApplicationReport:
    """``kind="random_projection"`` (needs m, alpha = 1) or ``kind="subspace_distance"`` (needs d)."""
    if not M > 0:
        raise BoundError("M must be positive")
    if kind == "random_projection":
        if m is None or not 0 < m < n:
            raise BoundError("random projection needs 0 < m < n")
        if alpha != 1:
            raise BoundError("random projection bound needs alpha = 1")
        sig = np.ones(n) if sigmas is None else np.asarray(sigmas, dtype=float)
        if sig.shape != (n,):
            raise BoundError("sigmas must have length n")
        centering = m / n * float(np.sum(sig**2))
        # deviation M^2 max(sqrt(x m), x^2): terms (M^2 sqrt(m), 2) and (M^2, 1/2)
        bound = TailBound(((M * M * math.sqrt(m), 2.0), (M * M, 0.5)), 2.0, C,
                          {"source": "random_projection", "m": m, "n": n, "M": M})
        return ApplicationReport(bound, centering, None, dict(bound.meta))
    if kind == "subspace_distance":
        if d is None or not 0 <= d < n:
            raise BoundError("subspace distance needs 0 <= d < n")
        _check_alpha(alpha)
        centering = math.sqrt(n - d)
        bound = TailBound(((M ** (4 / alpha), float(alpha)),), 2.0, C,
                          {"source": "subspace_distance", "d": d, "n": n, "alpha": alpha, "M": M})
        return ApplicationReport(bound, centering, centering, dict(bound.meta))
    raise BoundError(f"unknown kind {kind!r}")


def projection_deviation(report: ApplicationReport, x: float) -> float:
    """``M^2 max(sqrt(x m), x^2)`` for a random-projection report."""
    return deviation_at_confidence(report.bound, x)


def spectral_product_bound(
    B, n: int, alpha: float, M: float, u: float = 1.0, v: float = 1.0, C_alpha: float = 1.0
) -> ApplicationReport:
    """Deviation level for ``||B G||_op`` with G an N x n matrix of independent entries.

    ``deviation = 4 C_alpha M^(4/alpha) (u ||B||_HS + v n^(1/alpha) ||B||_op)`` holds with
    probability at least ``1 - 2 exp(-u^alpha r^alpha - v^alpha n)``, where
    ``r = ||B||_HS / ||B||_op``.
    """
    m = _matrix(B)
    if u < 1 or v < 1:
        raise BoundError("u and v must be >= 1")
    if not 0 < alpha <= 1:
        raise BoundError("alpha must lie in (0, 1]")
    if n < 1 or not M > 0:
        raise BoundError("need n >= 1 and M > 0")
    hs = float(np.linalg.norm(m))
    op = float(np.linalg.norm(m, 2))
    r = hs / op if op > 0 else 0.0
    level = 4 * C_alpha * M ** (4 / alpha) * (u * hs + v * n ** (1 / alpha) * op)
    fail = min(1.0, 2 * math.exp(-(u**alpha) * r**alpha - v**alpha * n))
    return ApplicationReport(
        None, hs, None,
        {"source": "spectral_product", "stable_rank_ratio": r, "failure_probability": fail,
         "hs": hs, "op": op, "r_definition": "||B||_HS / ||B||_op"},
        deviation=level,
    )


def regression_design_matrix(Y) -> np.ndarray:
    """``n^-2 Y^T Sigma^-1 Y`` with ``Sigma = n^-1 Y Y^T`` for a d x n design."""
    Y = _matrix(Y)
    n = Y.shape[1]
    sigma = Y @ Y.T / n
    cond = np.linalg.cond(sigma)
    if not np.isfinite(cond) or cond > CONDITION_CAP:
        raise BoundError(f"design covariance is singular or ill-conditioned (cond={cond:.3g})")
    # Sigma^-1 Y through a Cholesky solve
    L = np.linalg.cholesky(sigma)
    Z = np.linalg.solve(L, Y)
    return Z.T @ Z / n**2


def regression_excess_bound(Y, M: float, x: float) -> float:
    """``4 M^2 max(sqrt(x) ||A||_HS, x ||A||_op, x^1.5 max-row, x^2 ||A||_inf)``."""
    if not M > 0 or not x > 0:
        raise BoundError("M and x must be positive")
    A = regression_design_matrix(Y)
    nr = quadratic_norms(A)
    return 4 * M * M * max(math.sqrt(x) * nr.hs, x * nr.op, x**1.5 * nr.max_row, x**2 * nr.max_entry)


def poisson_quadratic_bound(lambdas: Sequence[float], A) -> ApplicationReport:
    """Quadratic form in independent Poisson variables, centered at ``sum_i a_ii lambda_i``.

    The bound is in units of ``B^2`` with ``B`` the psi_1 norm of Poisson(max rate);
    ``meta["weak"]`` holds the two-regime weakening.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 1 or np.any(lam <= 0):
        raise BoundError("rates must be positive")
    mat = A if isinstance(A, DenseTensor) else DenseTensor(_matrix(A))
    if mat.dim != lam.size:
        raise BoundError("matrix and rates disagree on n")
    B = psi_norm_exact(poisson(float(lam.max()))).value
    hw = hanson_wright(mat, 1.0, q=2)
    centering = float(np.dot(np.diag(mat.values), lam))
    nr = hw.meta["norms"]
    weak = TailBound.from_terms([(nr["hs"], 2.0), (nr["op"], 0.5)], meta={"source": "poisson_weak"})
    return ApplicationReport(
        hw, centering, None,
        {"source": "poisson_quadratic", "psi_scale": B, "t_unit": B * B, "weak": weak},
    )


def clt_linear_approx_bound(A, dists: Sequence[DistributionSpec]) -> ApplicationReport:
    """Deviation of ``Q - E Q - 2L`` in units of ``Var(L)``; also reports the mean-field ratio."""
    mat = _matrix(A)
    means = np.array([d.mean for d in dists])
    variances = np.array([d.variance for d in dists])
    if means.shape != (mat.shape[0],):
        raise BoundError("need one distribution per coordinate")
    if not np.any(means):
        raise BoundError("all means vanish, so the linear term is zero")
    h = hoeffding_quadratic(mat, means, variances)
    var_l = h.linear_variance
    if var_l == 0:
        raise BoundError("linear term has zero variance")
    hs = float(np.linalg.norm(mat))
    ratio = var_l / hs**2
    scale = hs / var_l
    bound = TailBound.from_terms([(scale, 2.0), (scale, 0.5)], meta={"source": "clt_linear"}, group=False)
    return ApplicationReport(
        bound, h.constant, None,
        {"source": "clt_linear", "linear_variance": var_l, "mean_field_ratio": ratio,
         "linear_coefficients": h.linear.tolist()},
    )
