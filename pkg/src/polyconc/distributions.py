"""Distribution families used as inputs to the concentration bounds.

A :class:`DistributionSpec` carries enough analytic information to drive the
rest of the package: absolute moments (for the moment-growth sandwich), raw
moments (for expected derivative tensors), mean and variance, and the
log of ``E exp(|X|^alpha / t^alpha)`` where it can be evaluated.  Sampling
lives in :mod:`polyconc.simulate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Optional

import numpy as np
from scipy import integrate, special, stats

FAMILIES = (
    "gaussian",
    "rademacher",
    "symmetric_weibull",
    "poisson",
    "exponential",
    "bounded",
    "gaussian_product",
    "weibull_product",
    "custom",
)

LOG2 = math.log(2.0)


class DistributionError(ValueError):
    """Invalid family or parameters."""


class NotEvaluableError(DistributionError):
    """The requested analytic quantity has no implementation for this family."""


@dataclass(frozen=True, eq=False)
class DistributionSpec:
    """A distribution family with its tail exponent and optional psi bound.

    ``params`` holds the family parameters (see the factory functions below);
    ``alpha`` is the tail-decay exponent used for Orlicz computations and
    ``psi_norm`` an optional known bound ``M`` on the psi_alpha norm.
    """

    family: str
    alpha: float
    params: Mapping[str, Any] = field(default_factory=dict)
    psi_norm: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DistributionError(f"unknown family {self.family!r}")
        if not self.alpha > 0:
            raise DistributionError("alpha must be positive")
        if self.psi_norm is not None and not self.psi_norm > 0:
            raise DistributionError("psi_norm must be positive when given")
        _validate_params(self.family, self.params)

    def with_alpha(self, alpha: float) -> "DistributionSpec":
        """Same law, different Orlicz exponent (drops any stored psi bound)."""
        return replace(self, alpha=float(alpha), psi_norm=None)

    def with_psi_norm(self, value: float) -> "DistributionSpec":
        return replace(self, psi_norm=float(value))

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items() if not callable(v))
        return f"DistributionSpec({self.family}({args}), alpha={self.alpha:g})"

    # -- moments -------------------------------------------------------------

    @property
    def mean(self) -> float:
        return float(self.raw_moment(1))

    @property
    def variance(self) -> float:
        return float(self.raw_moment(2) - self.raw_moment(1) ** 2)

    @property
    def is_nonnegative(self) -> bool:
        fam, p = self.family, self.params
        if fam in ("poisson", "exponential"):
            return True
        if fam == "bounded":
            return bool(np.all(np.asarray(p["support"]) >= 0))
        if fam == "custom":
            return bool(p.get("nonnegative", False))
        return False

    def raw_moment(self, k: int) -> float:
        """``E X^k`` for an integer ``k >= 0``."""
        k = int(k)
        if k < 0:
            raise DistributionError("raw moments need k >= 0")
        if k == 0:
            return 1.0
        fam, p = self.family, self.params
        if fam == "gaussian":
            return float(stats.norm(loc=p["mean"], scale=p["std"]).moment(k))
        if fam == "rademacher":
            return 1.0 if k % 2 == 0 else 0.0
        if fam == "symmetric_weibull":
            return math.gamma(1 + k / p["shape"]) if k % 2 == 0 else 0.0
        if fam == "poisson":
            return float(stats.poisson(p["rate"]).moment(k))
        if fam == "exponential":
            return math.factorial(k) / p["rate"] ** k
        if fam == "bounded":
            x = np.asarray(p["support"], dtype=float)
            return float(np.dot(p["probs"], x**k))
        if fam == "gaussian_product":
            return _gaussian_raw(k) ** p["factors"]
        if fam == "weibull_product":
            one = math.gamma(1 + k / p["shape"]) if k % 2 == 0 else 0.0
            return one ** p["factors"]
        oracle = p.get("raw_moment")
        if oracle is None:
            raise NotEvaluableError("custom distribution has no raw moment oracle")
        return float(oracle(k))

    def log_abs_moment(self, p: float) -> float:
        """``log E|X|^p`` for real ``p > 0``; ``-inf`` for X = 0 a.s."""
        fam, prm = self.family, self.params
        if fam == "gaussian":
            if prm["mean"] == 0:
                return (
                    p * math.log(prm["std"])
                    + 0.5 * p * LOG2
                    + special.gammaln((p + 1) / 2)
                    - 0.5 * math.log(math.pi)
                )
            dist = stats.norm(loc=prm["mean"], scale=prm["std"])
            val, _ = integrate.quad(lambda x: abs(x) ** p * dist.pdf(x), -np.inf, np.inf)
            return math.log(val)
        if fam == "rademacher":
            return 0.0
        if fam == "symmetric_weibull":
            return float(special.gammaln(1 + p / prm["shape"]))
        if fam == "exponential":
            return float(special.gammaln(1 + p) - p * math.log(prm["rate"]))
        if fam == "poisson":
            lam = prm["rate"]
            kmax = int(lam + 20 * math.sqrt(lam) + 20 * p + 100)
            k = np.arange(1, kmax + 1)
            return float(special.logsumexp(stats.poisson.logpmf(k, lam) + p * np.log(k)))
        if fam == "bounded":
            x = np.abs(np.asarray(prm["support"], dtype=float))
            w = np.asarray(prm["probs"], dtype=float)
            keep = (x > 0) & (w > 0)
            if not keep.any():
                return -math.inf
            return float(special.logsumexp(p * np.log(x[keep]), b=w[keep]))
        if fam == "gaussian_product":
            one = 0.5 * p * LOG2 + special.gammaln((p + 1) / 2) - 0.5 * math.log(math.pi)
            return float(prm["factors"] * one)
        if fam == "weibull_product":
            return float(prm["factors"] * special.gammaln(1 + p / prm["shape"]))
        oracle = prm.get("lp_norm")
        if oracle is None:
            raise NotEvaluableError("custom distribution has no moment oracle")
        val = float(oracle(p))
        return -math.inf if val == 0 else p * math.log(val)

    def lp_norm(self, p: float) -> float:
        """``||X||_p = (E|X|^p)^(1/p)``."""
        if self.family == "custom" and self.params.get("lp_norm") is not None:
            return float(self.params["lp_norm"](p))
        return math.exp(self.log_abs_moment(p) / p)

    # -- Orlicz objective ----------------------------------------------------

    def log_psi_objective(self, t: float) -> float:
        """``log E exp(|X|^alpha / t^alpha)``, ``inf`` where it diverges."""
        a = self.alpha
        fam, p = self.family, self.params
        s = t**-a
        if fam == "rademacher":
            return s
        if fam == "bounded":
            x = np.abs(np.asarray(p["support"], dtype=float))
            return float(special.logsumexp(x**a * s, b=p["probs"]))
        if fam == "gaussian" and p["mean"] == 0:
            sig = p["std"]
            if a > 2:
                return math.inf
            if a == 2:
                r = 2 * sig**2 / t**2
                return math.inf if r >= 1 else -0.5 * math.log1p(-r)
            return _log_integral(
                lambda x: np.log(2.0) + stats.norm.logpdf(x, scale=sig) + (x / t) ** a
            )
        if fam == "gaussian":
            if a > 2:
                return math.inf
            mu, sig = p["mean"], p["std"]
            return _log_integral(
                lambda x: np.logaddexp(
                    stats.norm.logpdf(x, mu, sig), stats.norm.logpdf(-x, mu, sig)
                )
                + (x / t) ** a
            )
        if fam == "exponential":
            rate = p["rate"]
            if a > 1:
                return math.inf
            if a == 1:
                return math.inf if rate * t <= 1 else -math.log1p(-1.0 / (rate * t))
            return _log_integral(lambda x: math.log(rate) - rate * x + (x / t) ** a)
        if fam == "poisson":
            lam = p["rate"]
            if a > 1:
                return math.inf
            if a == 1:
                return lam * math.expm1(1.0 / t) if 1.0 / t < 700 else math.inf
            return _log_poisson_series(lam, a, t)
        if fam in ("symmetric_weibull", "weibull_product"):
            if fam == "weibull_product" and p["factors"] != 1:
                raise NotEvaluableError("psi objective for products of >1 Weibull factors")
            shape = p["shape"]
            # |W|^shape ~ Exp(1)
            beta = a / shape
            if beta > 1:
                return math.inf
            if beta == 1:
                return math.inf if s >= 1 else -math.log1p(-s)
            return _log_integral(lambda u: -u + u**beta * s)
        if fam == "gaussian_product":
            q = p["factors"]
            if q == 1:
                return replace(self, family="gaussian", params={"mean": 0.0, "std": 1.0}).log_psi_objective(t)
            if q != 2:
                raise NotEvaluableError("psi objective for products of >2 Gaussian factors")
            if a > 1:
                return math.inf
            if a == 1:
                b = 1.0 / t
                if b >= 1:
                    return math.inf
                return math.log(2 / math.pi * math.acos(-b) / math.sqrt(1 - b * b))
            # |g1 g2| has density (2/pi) K0(x)
            return _log_integral(
                lambda x: math.log(2 / math.pi) + np.log(special.k0e(x)) - x + (x / t) ** a
            )
        fn = p.get("log_psi_objective")
        if fn is None:
            raise NotEvaluableError("custom distribution has no psi objective")
        return float(fn(t))


def _gaussian_raw(k: int) -> float:
    return 0.0 if k % 2 else float(special.factorial2(k - 1, exact=True)) if k > 0 else 1.0


_GRID = np.geomspace(1e-12, 1e6, 6001)


def _log_integral(h: Callable[[np.ndarray], np.ndarray]) -> float:
    """``log int_0^inf exp(h(x)) dx`` for a smooth unimodal-ish log integrand."""
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        vals = np.asarray(h(_GRID), dtype=float)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    k = int(np.argmax(vals))
    hmax = float(vals[k])
    if not math.isfinite(hmax) or hmax > 700 or k == len(_GRID) - 1:
        return math.inf
    peak = float(_GRID[k])

    def f(x):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            v = math.exp(float(h(np.asarray(x))) - hmax)
        return v

    left, _ = integrate.quad(f, 0.0, peak, limit=200)
    right, _ = integrate.quad(f, peak, 2 * peak + 10, limit=200)
    tail, _ = integrate.quad(f, 2 * peak + 10, np.inf, limit=200)
    return hmax + math.log(left + right + tail)


def _log_poisson_series(lam: float, a: float, t: float) -> float:
    kmax = int(lam + 40 * math.sqrt(lam) + 400)
    while True:
        k = np.arange(0, kmax + 1)
        terms = stats.poisson.logpmf(k, lam) + (k / t) ** a
        if terms[-1] < terms.max() - 50 and terms[-1] < terms[-2]:
            return float(special.logsumexp(terms))
        if kmax > 10**7:
            return math.inf
        kmax *= 4


def _validate_params(family: str, p: Mapping[str, Any]) -> None:
    def pos(name):
        if name not in p or not p[name] > 0:
            raise DistributionError(f"{family}: parameter {name!r} must be positive")

    if family == "gaussian":
        pos("std")
        if "mean" not in p:
            raise DistributionError("gaussian: missing mean")
    elif family == "symmetric_weibull":
        pos("shape")
    elif family in ("poisson", "exponential"):
        pos("rate")
    elif family == "bounded":
        x = np.asarray(p.get("support", ()), dtype=float)
        w = np.asarray(p.get("probs", ()), dtype=float)
        if x.ndim != 1 or x.size == 0 or w.shape != x.shape:
            raise DistributionError("bounded: support and probs must be equal-length vectors")
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-12):
            raise DistributionError("bounded: probs must be a probability vector")
    elif family in ("gaussian_product", "weibull_product"):
        if int(p.get("factors", 0)) < 1:
            raise DistributionError(f"{family}: factors must be >= 1")
        if family == "weibull_product":
            pos("shape")
    elif family == "custom":
        if p.get("sampler") is None and p.get("lp_norm") is None:
            raise DistributionError("custom: need a sampler or a moment oracle")


# -- factories ---------------------------------------------------------------


def gaussian(std: float = 1.0, mean: float = 0.0, alpha: float = 2.0, psi_norm=None):
    return DistributionSpec("gaussian", alpha, {"mean": float(mean), "std": float(std)}, psi_norm)


def rademacher(alpha: float = 2.0, psi_norm=None):
    return DistributionSpec("rademacher", alpha, {}, psi_norm)


def symmetric_weibull(shape: float, alpha: Optional[float] = None, psi_norm=None):
    """Symmetric Weibull with ``P(|W| >= t) = exp(-t^shape)``."""
    return DistributionSpec(
        "symmetric_weibull", shape if alpha is None else alpha, {"shape": float(shape)}, psi_norm
    )


def poisson(rate: float, alpha: float = 1.0, psi_norm=None):
    return DistributionSpec("poisson", alpha, {"rate": float(rate)}, psi_norm)


def exponential(rate: float = 1.0, alpha: float = 1.0, psi_norm=None):
    return DistributionSpec("exponential", alpha, {"rate": float(rate)}, psi_norm)


def bounded(support, probs=None, alpha: float = 2.0, psi_norm=None):
    """Finitely supported law; uniform over ``support`` unless ``probs`` given."""
    support = tuple(float(x) for x in support)
    if probs is None:
        probs = (1.0 / len(support),) * len(support) if support else ()
    return DistributionSpec(
        "bounded", alpha, {"support": support, "probs": tuple(float(w) for w in probs)}, psi_norm
    )


def bernoulli(p: float, alpha: float = 2.0, psi_norm=None):
    if not 0 < p < 1:
        raise DistributionError("bernoulli: p must lie in (0, 1)")
    return bounded((0.0, 1.0), (1.0 - p, p), alpha=alpha, psi_norm=psi_norm)


def gaussian_product(factors: int, alpha: Optional[float] = None, psi_norm=None):
    """Product of ``factors`` independent standard Gaussians."""
    factors = int(factors)
    if factors < 1:
        raise DistributionError("gaussian_product: factors must be >= 1")
    a = 2.0 / factors if alpha is None else alpha
    return DistributionSpec("gaussian_product", a, {"factors": factors}, psi_norm)


def weibull_product(factors: int, shape: float, alpha: Optional[float] = None, psi_norm=None):
    """Product of ``factors`` independent symmetric Weibull(shape) variables."""
    factors = int(factors)
    if factors < 1:
        raise DistributionError("weibull_product: factors must be >= 1")
    a = shape / factors if alpha is None else alpha
    return DistributionSpec(
        "weibull_product", a, {"factors": factors, "shape": float(shape)}, psi_norm
    )


def custom(
    alpha: float,
    sampler: Optional[Callable] = None,
    lp_norm: Optional[Callable[[float], float]] = None,
    raw_moment: Optional[Callable[[int], float]] = None,
    log_psi_objective: Optional[Callable[[float], float]] = None,
    nonnegative: bool = False,
    psi_norm=None,
):
    """User-supplied law.  ``sampler(rng, size)`` must return an array."""
    return DistributionSpec(
        "custom",
        alpha,
        {
            "sampler": sampler,
            "lp_norm": lp_norm,
            "raw_moment": raw_moment,
            "log_psi_objective": log_psi_objective,
            "nonnegative": nonnegative,
        },
        psi_norm,
    )


def parse_distribution(text: str) -> DistributionSpec:
    """Parse ``family[:p1,p2,...]`` strings such as ``weibull:0.5`` or ``poisson:1``."""
    name, _, rest = text.strip().partition(":")
    name = name.strip().lower()
    try:
        args = [float(x) for x in rest.split(",")] if rest.strip() else []
    except ValueError as exc:
        raise DistributionError(f"bad parameters in {text!r}") from exc
    table = {
        "gaussian": lambda *a: gaussian(*(a[::-1] if len(a) == 2 else a)),
        "normal": lambda *a: gaussian(*(a[::-1] if len(a) == 2 else a)),
        "rademacher": rademacher,
        "weibull": symmetric_weibull,
        "symmetric_weibull": symmetric_weibull,
        "poisson": poisson,
        "exponential": exponential,
        "bernoulli": bernoulli,
        "gaussian_product": lambda q: gaussian_product(int(q)),
        "weibull_product": lambda k, shape: weibull_product(int(k), shape),
    }
    if name not in table:
        raise DistributionError(f"unknown distribution {name!r}")
    try:
        return table[name](*args)
    except TypeError as exc:
        raise DistributionError(f"wrong number of parameters in {text!r}") from exc
