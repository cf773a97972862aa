"""Monte Carlo checks: samplers, empirical tails, constant calibration and graph CLT runs.

Random streams come from numpy's counter-based Philox generator keyed by
``(seed, stream)``.  Large sample matrices are produced in fixed-size row
chunks, chunk k using stream k, so results do not depend on how the work is
split or scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .bounds import BoundError, TailBound, chaos_tail_bound, chaos_tail_bound_alpha, hanson_wright
from .distributions import DistributionSpec
from .orlicz import psi_norm_exact
from .polynomial import Polynomial, chaos_eval
from .tensors import DenseTensor

CHUNK_ROWS = 4096
GRID_POINTS = 50
MIN_TAIL_COUNT = 30


class SimulationError(ValueError):
    pass


class CalibrationError(SimulationError):
    """No constant up to the cap makes the bound dominate the empirical tail."""


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream], dtype=np.uint64)))


# -- samplers ---------------------------------------------------------------------


def _draw(dist: DistributionSpec, rng: np.random.Generator, size) -> np.ndarray:
    fam, p = dist.family, dist.params
    if fam == "gaussian":
        return rng.normal(p["mean"], p["std"], size)
    if fam == "rademacher":
        return 2.0 * rng.integers(0, 2, size) - 1.0
    if fam == "symmetric_weibull":
        return _weibull(rng, p["shape"], size)
    if fam == "poisson":
        return rng.poisson(p["rate"], size).astype(float)
    if fam == "exponential":
        return rng.exponential(1.0 / p["rate"], size)
    if fam == "bounded":
        return rng.choice(np.asarray(p["support"]), size=size, p=np.asarray(p["probs"]))
    if fam == "gaussian_product":
        out = rng.standard_normal(size)
        for _ in range(p["factors"] - 1):
            out *= rng.standard_normal(size)
        return out
    if fam == "weibull_product":
        out = _weibull(rng, p["shape"], size)
        for _ in range(p["factors"] - 1):
            out *= _weibull(rng, p["shape"], size)
        return out
    sampler = p.get("sampler")
    if sampler is None:
        raise SimulationError("custom distribution has no sampler")
    return np.asarray(sampler(rng, size), dtype=float)


def weibull_from_uniform(u, shape: float):
    """Magnitude ``(-log U)^(1/shape)`` of a symmetric Weibull variable."""
    return (-np.log(u)) ** (1.0 / shape)


def _weibull(rng: np.random.Generator, shape: float, size) -> np.ndarray:
    u = 1.0 - rng.random(size)  # in (0, 1]
    sign = 2.0 * rng.integers(0, 2, size) - 1.0
    return sign * weibull_from_uniform(u, shape)


def sample(dist: DistributionSpec, count: int, seed: int, stream: int = 0) -> np.ndarray:
    """``count`` independent draws; identical for identical ``(seed, stream)``."""
    if count < 1:
        raise SimulationError("count must be >= 1")
    return _draw(dist, make_rng(seed, stream), count)


def sample_matrix(dists: Sequence[DistributionSpec] | DistributionSpec, n: int, rows: int, seed: int) -> np.ndarray:
    """``rows`` independent draws of the vector (X_1..X_n), generated chunk by chunk."""
    return np.concatenate(list(iter_sample_chunks(dists, n, rows, seed)))


def iter_sample_chunks(dists, n: int, rows: int, seed: int, chunk: int = CHUNK_ROWS):
    iid = isinstance(dists, DistributionSpec)
    if not iid and len(dists) != n:
        raise SimulationError("need one distribution per coordinate")
    for k, start in enumerate(range(0, rows, chunk)):
        size = min(chunk, rows - start)
        rng = make_rng(seed, k)
        if iid:
            yield _draw(dists, rng, (size, n))
        else:
            yield np.column_stack([_draw(d, rng, size) for d in dists])


def random_projection(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed rank-m orthogonal projection of R^n via a Gaussian frame."""
    g = rng.standard_normal((n, m))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    return q @ q.T


# -- empirical tails and calibration ------------------------------------------------------


class EmpiricalTail:
    """Sorted sample with ``survival(t) = #{x >= t} / N``."""

    def __init__(self, samples):
        x = np.sort(np.asarray(samples, dtype=float).ravel())
        if x.size == 0:
            raise SimulationError("empty sample")
        self.values = x
        self.count = x.size

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        out = (self.count - np.searchsorted(self.values, t, side="left")) / self.count
        return out if t.ndim else float(out)

    def quantile(self, level: float) -> float:
        return float(np.quantile(self.values, level))

    def default_grid(self, points: int = GRID_POINTS) -> np.ndarray:
        """Geometric grid from the median to the ``1 - 30/N`` quantile."""
        hi = self.quantile(max(0.5, 1.0 - MIN_TAIL_COUNT / self.count))
        lo = self.quantile(0.5)
        if hi <= 0:
            return np.ones(1)
        if lo <= 0:
            lo = hi * 1e-3
        return np.geomspace(lo, hi, points)


@dataclass
class CalibrationResult:
    minimal_C: float
    grid: np.ndarray
    violations_at_C: int
    violations_below: int

    def as_dict(self) -> dict:
        return {
            "minimal_C": self.minimal_C,
            "violations_at_C": self.violations_at_C,
            "violations_below": self.violations_below,
            "grid_points": int(len(self.grid)),
        }


def _violations(tail: EmpiricalTail, bound: TailBound, grid: np.ndarray, C: float) -> int:
    s = tail.survival(grid)
    b = bound.with_constant(C).probability(grid)
    return int(np.sum(s > b))


def calibrate_constant(
    tail: EmpiricalTail,
    bound: TailBound,
    t_grid: Optional[Sequence[float]] = None,
    C_max: float = 1e6,
    C_min: float = 1e-9,
    rel_tol: float = 1e-6,
) -> CalibrationResult:
    """Smallest C (by bisection in log C) for which the bound dominates on the grid."""
    grid = tail.default_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    if grid.size == 0:
        raise SimulationError("empty t grid")
    if _violations(tail, bound, grid, C_max):
        raise CalibrationError(f"bound is violated on the grid even with C = {C_max:g}")
    if not _violations(tail, bound, grid, C_min):
        return CalibrationResult(C_min, grid, 0, 0)
    lo, hi = math.log(C_min), math.log(C_max)
    while hi - lo > rel_tol:
        mid = 0.5 * (lo + hi)
        if _violations(tail, bound, grid, math.exp(mid)):
            lo = mid
        else:
            hi = mid
    C = math.exp(hi)
    return CalibrationResult(C, grid, _violations(tail, bound, grid, C), _violations(tail, bound, grid, C / 1.01))


def minimal_constant_direct(tail: EmpiricalTail, bound: TailBound, grid) -> float:
    """``max_t m(t) / log(prefactor / s(t))`` over grid points with positive survival."""
    grid = np.asarray(grid, dtype=float)
    s = tail.survival(grid)
    keep = s > 0
    if not keep.any() or not bound.terms:
        return 0.0
    m = bound.exponent_value(grid[keep])
    return float(np.max(m / np.log(bound.prefactor / s[keep])))


# -- slopes -------------------------------------------------------------------------------


def loglog_slope(t, survival_or_logbound, prefactor: float = 1.0, is_log: bool = False) -> float:
    """Least-squares slope of ``log(-log(S/prefactor))`` against ``log t``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(survival_or_logbound, dtype=float)
    y = -(v - math.log(prefactor)) if is_log else -np.log(v / prefactor)
    keep = (y > 0) & np.isfinite(y)
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(t[keep]), np.log(y[keep]), 1)[0])


def bound_far_slope(bound: TailBound, decades_beyond: float = 2.0) -> tuple[float, tuple[float, float]]:
    """Slope of the bound on one decade well beyond its last crossover."""
    xs = bound.crossovers()
    base = max([s for s, _ in bound.terms] + xs)
    start = base * 10**decades_beyond
    t = np.geomspace(start, 10 * start, 50)
    return loglog_slope(t, bound.log_evaluate(t), bound.prefactor, is_log=True), (start, 10 * start)


def bound_near_slope(bound: TailBound) -> tuple[float, tuple[float, float]]:
    """Slope of the bound on the decade ending 100x below its first crossover."""
    xs = bound.crossovers()
    end = (xs[0] if xs else min(s for s, _ in bound.terms)) / 100
    t = np.geomspace(end / 10, end, 50)
    return loglog_slope(t, bound.log_evaluate(t), bound.prefactor, is_log=True), (end / 10, end)


# -- domination experiments -----------------------------------------------------------------


@dataclass
class Experiment:
    """A Monte Carlo check of a tail bound.

    ``form`` is ``"chaos"`` (tensor A, variables centered at their means),
    ``"polynomial"`` (f(X) - E f(X)) or ``"norm"`` (``||B X||_2 - ||B||_HS``).
    ``bound_kind`` selects the bound for chaos forms: ``"hanson_wright"``
    (matrices only), ``"chaos"`` (q mode) or ``"chaos_alpha"``.
    """

    dist: DistributionSpec
    n: int
    form: str = "chaos"
    tensor: Optional[DenseTensor] = None
    polynomial: Optional[Polynomial] = None
    q: Optional[int] = None
    alpha: Optional[float] = None
    N: int = 100_000
    seed: int = 0
    grid: Optional[Sequence[float]] = None
    bound_kind: str = "hanson_wright"
    M: Optional[float] = None
    C_max: float = 1e6


@dataclass
class DominationReport:
    calibration: CalibrationResult
    bound: TailBound
    tail: EmpiricalTail
    M: float
    alpha: float
    bound_far_slope: float
    bound_near_slope: float
    empirical_far_slope: float
    crossovers: list
    validity_threshold: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def rows(self):
        grid = self.calibration.grid
        s = self.tail.survival(grid)
        b = self.bound.with_constant(self.calibration.minimal_C).probability(grid)
        return list(zip(grid.tolist(), np.asarray(s).tolist(), np.asarray(b).tolist()))

    def summary(self) -> dict:
        return {
            **self.calibration.as_dict(),
            "M": self.M,
            "alpha": self.alpha,
            "bound_far_slope": self.bound_far_slope,
            "bound_near_slope": self.bound_near_slope,
            "bound_smallest_exponent": self.bound.smallest_exponent if self.bound.terms else None,
            "empirical_far_slope": self.empirical_far_slope,
            "crossovers": list(self.crossovers),
            "terms": [list(t) for t in self.bound.terms],
            "validity_threshold": self.validity_threshold,
            **self.extra,
        }


def _effective_alpha(exp: Experiment) -> float:
    if (exp.q is None) == (exp.alpha is None):
        raise SimulationError("give exactly one of q or alpha")
    return 2.0 / exp.q if exp.q is not None else float(exp.alpha)


def _quadratic_samples(A: np.ndarray, dist, n: int, N: int, seed: int, means: np.ndarray) -> np.ndarray:
    out = []
    for X in iter_sample_chunks(dist, n, N, seed):
        Y = X - means
        out.append(np.einsum("zi,zi->z", Y @ A, Y))
    return np.concatenate(out)


def form_samples(exp: Experiment) -> tuple[np.ndarray, float]:
    """Draw N values of the experiment's statistic and return them with the centering."""
    n, dist = exp.n, exp.dist
    means = np.full(n, dist.mean)
    if exp.form == "chaos":
        A = exp.tensor
        if A is None or A.dim != n:
            raise SimulationError("chaos form needs a tensor of dimension n")
        if A.order == 2:
            z = _quadratic_samples(A.values, dist, n, exp.N, exp.seed, means)
            centering = float(dist.variance * np.trace(A.values))
        else:
            z = np.concatenate([chaos_eval(A, X, means) for X in iter_sample_chunks(dist, n, exp.N, exp.seed)])
            centering = 0.0
        return z - centering, centering
    if exp.form == "polynomial":
        f = exp.polynomial
        if f is None or f.n != n:
            raise SimulationError("polynomial form needs a polynomial in n variables")
        mean = sum(
            c * math.prod(dist.raw_moment(e) for e in exps) for exps, c in f.terms.items()
        )
        z = np.concatenate([f(X) for X in iter_sample_chunks(dist, n, exp.N, exp.seed)])
        return z - mean, mean
    if exp.form == "norm":
        B = exp.tensor
        if B is None or B.order != 2 or B.dim != n:
            raise SimulationError("norm form needs an n x n matrix")
        hs = B.hs_norm()
        z = np.concatenate([np.linalg.norm(X @ B.values.T, axis=1) for X in iter_sample_chunks(dist, n, exp.N, exp.seed)])
        return z - hs, hs
    raise SimulationError(f"unknown form {exp.form!r}")


def build_bound(exp: Experiment, M: float) -> tuple[TailBound, Optional[float]]:
    from .applications import euclidean_norm_bound
    from .bounds import polynomial_tail_bound

    alpha = _effective_alpha(exp)
    if exp.form == "chaos":
        A = exp.tensor
        if exp.bound_kind == "hanson_wright":
            if exp.q is not None:
                return hanson_wright(A, M, q=exp.q, variances=np.full(exp.n, exp.dist.variance)), None
            return hanson_wright(A, M, alpha=alpha, variances=np.full(exp.n, exp.dist.variance)), None
        if exp.bound_kind == "chaos":
            return chaos_tail_bound(A, exp.q if exp.q is not None else 1, M), None
        if exp.bound_kind == "chaos_alpha":
            return chaos_tail_bound_alpha(A, alpha, M), None
        raise SimulationError(f"unknown bound kind {exp.bound_kind!r}")
    if exp.form == "polynomial":
        dists = [exp.dist] * exp.n
        return polynomial_tail_bound(exp.polynomial, dists, q=exp.q, alpha=exp.alpha, M=M), None
    report = euclidean_norm_bound(exp.tensor, alpha, M)
    return report.bound, report.validity_threshold


def verify_domination(exp: Experiment) -> DominationReport:
    """Sample the statistic, build its bound, calibrate C and report tail slopes."""
    if exp.N < 10_000:
        raise SimulationError("N must be at least 10^4")
    alpha = _effective_alpha(exp)
    M = exp.M if exp.M is not None else psi_norm_exact(exp.dist.with_alpha(alpha)).value
    z, centering = form_samples(exp)
    tail = EmpiricalTail(np.abs(z))
    bound, threshold = build_bound(exp, M)
    if exp.grid is not None:
        grid = np.asarray(exp.grid, dtype=float)
    else:
        grid = tail.default_grid()
        if threshold is not None:
            grid = grid[grid >= threshold]
            if grid.size == 0:
                raise SimulationError("no grid point lies in the bound's validity range")
    cal = calibrate_constant(tail, bound, grid, C_max=exp.C_max)
    if bound.terms:
        far, _ = bound_far_slope(bound)
        near, _ = bound_near_slope(bound)
    else:
        far = near = math.nan
    top = grid[grid >= grid[-1] / 10]
    emp = loglog_slope(top, tail.survival(top)) if top.size >= 2 else math.nan
    return DominationReport(
        cal, bound, tail, M, alpha, far, near, emp, bound.crossovers(), threshold,
        {"centering": centering, "N": exp.N, "seed": exp.seed},
    )


# -- graphs ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphSpec:
    """``kind`` in complete(n), complete_bipartite(m1, m2), regular(n, degree), star(n), custom."""

    kind: str
    n: int = 0
    m1: int = 0
    m2: int = 0
    degree: int = 0
    custom_adjacency: Optional[tuple] = None

    @classmethod
    def complete(cls, n):
        return cls("complete", n=n)

    @classmethod
    def star(cls, n):
        return cls("star", n=n)

    @classmethod
    def complete_bipartite(cls, m1, m2):
        return cls("complete_bipartite", n=m1 + m2, m1=m1, m2=m2)

    @classmethod
    def regular(cls, n, degree):
        return cls("regular", n=n, degree=degree)

    @classmethod
    def custom(cls, adjacency):
        a = np.asarray(adjacency, dtype=float)
        return cls("custom", n=a.shape[0], custom_adjacency=tuple(map(tuple, a)))

    def adjacency(self) -> np.ndarray:
        n = self.n
        if n < 1:
            raise SimulationError("graph needs at least one vertex")
        if self.kind == "complete":
            a = np.ones((n, n)) - np.eye(n)
        elif self.kind == "star":
            a = np.zeros((n, n))
            a[0, 1:] = a[1:, 0] = 1.0
        elif self.kind == "complete_bipartite":
            a = np.zeros((n, n))
            a[: self.m1, self.m1:] = 1.0
            a[self.m1:, : self.m1] = 1.0
        elif self.kind == "regular":
            k = self.degree
            if not 0 <= k < n or (k * n) % 2:
                raise SimulationError("regular graph needs 0 <= degree < n and degree*n even")
            # circulant: neighbours at offsets +-1..+-k/2, plus the antipode for odd k
            a = np.zeros((n, n))
            idx = np.arange(n)
            for off in range(1, k // 2 + 1):
                a[idx, (idx + off) % n] = a[idx, (idx - off) % n] = 1.0
            if k % 2:
                a[idx, (idx + n // 2) % n] = 1.0
        elif self.kind == "custom":
            a = np.array(self.custom_adjacency, dtype=float)
        else:
            raise SimulationError(f"unknown graph kind {self.kind!r}")
        if not (np.array_equal(a, a.T) and not np.any(np.diag(a)) and np.all((a == 0) | (a == 1))):
            raise SimulationError("adjacency must be symmetric 0/1 with zero diagonal")
        return a


def graph_degree_stats(G: GraphSpec | np.ndarray) -> dict:
    """``sum deg^2 / (2|E|)`` and ``(sum deg^3)^2 / (sum deg^2)^3``."""
    a = G.adjacency() if isinstance(G, GraphSpec) else np.asarray(G, dtype=float)
    deg = a.sum(axis=1)
    two_e = deg.sum()
    if two_e == 0:
        raise SimulationError("graph has no edges")
    s2, s3 = float(np.sum(deg**2)), float(np.sum(deg**3))
    return {"ratio1": s2 / float(two_e), "ratio2": s3**2 / s2**3}


@dataclass
class CLTResult:
    normalized_samples: np.ndarray
    ks: float
    mean: float
    var: float
    ratios: dict

    def summary(self) -> dict:
        return {"ks": self.ks, "mean": self.mean, "var": self.var, **self.ratios}


def simulate_edge_weight_clt(G: GraphSpec, dist: DistributionSpec, reps: int, seed: int) -> CLTResult:
    """Normalized total edge weight ``(W - E W) / (2 lambda sigma (sum deg^2)^(1/2))`` with ``W = <A X, X>``."""
    if not dist.is_nonnegative:
        raise SimulationError("edge weights need a nonnegative distribution")
    lam, var = dist.mean, dist.variance
    if not lam > 0 or not var > 0:
        raise SimulationError("need positive mean and variance")
    if reps < 2:
        raise SimulationError("need at least two replicates")
    a = G.adjacency()
    n = a.shape[0]
    deg = a.sum(axis=1)
    expected = lam**2 * float(a.sum())
    scale = 2 * lam * math.sqrt(var) * math.sqrt(float(np.sum(deg**2)))
    w = _quadratic_samples(a, dist, n, reps, seed, np.zeros(n))
    z = (w - expected) / scale
    ks = float(stats.kstest(z, "norm").statistic)
    return CLTResult(z, ks, float(z.mean()), float(z.var()), graph_degree_stats(a))


__all__ = [
    "BoundError",
    "CalibrationError",
    "CalibrationResult",
    "CLTResult",
    "DominationReport",
    "EmpiricalTail",
    "Experiment",
    "GraphSpec",
    "SimulationError",
    "calibrate_constant",
    "graph_degree_stats",
    "make_rng",
    "random_projection",
    "sample",
    "sample_matrix",
    "simulate_edge_weight_clt",
    "verify_domination",
]
