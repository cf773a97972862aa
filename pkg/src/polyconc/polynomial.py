"""Sparse polynomials, expected derivative tensors and quadratic Hoeffding decompositions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .distributions import DistributionSpec
from .tensors import DenseTensor, DiagonalNotVanishingError, NotSymmetricError, TensorError


class PolynomialError(ValueError):
    pass


class Polynomial:
    """A polynomial in n variables stored as ``{exponent tuple: coefficient}``."""

    def __init__(self, n: int, terms: Mapping[Sequence[int], float]):
        if n < 1:
            raise PolynomialError("need at least one variable")
        clean: dict[tuple[int, ...], float] = {}
        for exps, coef in terms.items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != n or any(e < 0 for e in exps):
                raise PolynomialError(f"exponent vector {exps} invalid for {n} variables")
            clean[exps] = clean.get(exps, 0.0) + float(coef)
        self.n = n
        self.terms = {e: c for e, c in sorted(clean.items()) if c != 0.0}

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def __repr__(self):
        return f"Polynomial(n={self.n}, terms={len(self.terms)}, degree={self.degree})"

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.n == other.n and self.terms == other.terms

    def __call__(self, x) -> np.ndarray | float:
        """Evaluate at a point or at each row of an (N, n) array."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.n:
            raise PolynomialError(f"expected {self.n} coordinates")
        out = np.zeros(x.shape[0])
        for exps, coef in self.terms.items():
            term = np.full(x.shape[0], coef)
            for v, e in enumerate(exps):
                if e:
                    term = term * x[:, v] ** e
            out += term
        return float(out[0]) if single else out

    @classmethod
    def parse(cls, text: str) -> "Polynomial":
        """Lines ``coef e1 ... en``; blank lines and ``#`` comments are skipped."""
        rows = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                tokens = line.split()
                rows.append((float(tokens[0]), tuple(int(t) for t in tokens[1:])))
            except ValueError as exc:
                raise PolynomialError(f"malformed polynomial line {line!r}") from exc
        if not rows:
            raise PolynomialError("polynomial text has no terms")
        n = len(rows[0][1])
        if any(len(e) != n for _, e in rows):
            raise PolynomialError("all lines need the same number of exponents")
        terms: dict[tuple[int, ...], float] = {}
        for coef, exps in rows:
            terms[exps] = terms.get(exps, 0.0) + coef
        return cls(n, terms)

    def format(self) -> str:
        return "".join(
            f"{coef!r} " + " ".join(map(str, exps)) + "\n" for exps, coef in self.terms.items()
        )

    @classmethod
    def from_chaos(cls, A: DenseTensor) -> "Polynomial":
        """``sum_i a_i x_{i_1} ... x_{i_d}`` as a polynomial."""
        terms: dict[tuple[int, ...], float] = {}
        for idx in itertools.product(range(A.dim), repeat=A.order):
            a = A.values[idx]
            if a == 0:
                continue
            exps = [0] * A.dim
            for i in idx:
                exps[i] += 1
            key = tuple(exps)
            terms[key] = terms.get(key, 0.0) + float(a)
        return cls(A.dim, terms)


@dataclass(frozen=True)
class MomentModel:
    """Raw moments ``raw[i, k] = E X_i^k`` for k = 0..D."""

    raw: np.ndarray

    def __post_init__(self):
        raw = np.array(self.raw, dtype=float)
        if raw.ndim != 2 or raw.shape[1] < 1:
            raise PolynomialError("raw moments need shape (n, D+1)")
        if not np.allclose(raw[:, 0], 1.0):
            raise PolynomialError("zeroth moments must equal 1")
        if raw.shape[1] > 2 and np.any(raw[:, 2] - raw[:, 1] ** 2 < -1e-12):
            raise PolynomialError("moments imply a negative variance")
        raw.setflags(write=False)
        object.__setattr__(self, "raw", raw)

    @classmethod
    def from_distributions(cls, dists: Sequence[DistributionSpec], order: int) -> "MomentModel":
        return cls(np.array([[d.raw_moment(k) for k in range(order + 1)] for d in dists]))

    @classmethod
    def iid(cls, dist: DistributionSpec, n: int, order: int) -> "MomentModel":
        row = [dist.raw_moment(k) for k in range(order + 1)]
        return cls(np.tile(row, (n, 1)))

    @property
    def n(self) -> int:
        return self.raw.shape[0]

    @property
    def order(self) -> int:
        return self.raw.shape[1] - 1

    @property
    def means(self) -> np.ndarray:
        return self.raw[:, 1]

    @property
    def variances(self) -> np.ndarray:
        return self.raw[:, 2] - self.raw[:, 1] ** 2


def _falling(e: int, k: int) -> int:
    return math.perm(e, k)


def expected_derivative_tensors(f: Polynomial, moments: MomentModel) -> list[DenseTensor]:
    """``E f^{(d)}(X)`` for d = 1..deg f, by differentiating each monomial."""
    D = f.degree
    if moments.n != f.n:
        raise PolynomialError("moment model and polynomial disagree on n")
    if moments.order < D:
        raise PolynomialError(f"moments up to order {D} are required")
    if f.n**D > 10**7:
        raise TensorError("derivative tensor exceeds the dense limit")
    out = []
    for d in range(1, D + 1):
        T = np.zeros((f.n,) * d)
        for exps, coef in f.terms.items():
            if sum(exps) < d:
                continue
            support = [v for v, e in enumerate(exps) if e > 0]
            for combo in itertools.combinations_with_replacement(support, d):
                counts = {v: combo.count(v) for v in set(combo)}
                if any(counts[v] > exps[v] for v in counts):
                    continue
                value = coef
                for v, e in enumerate(exps):
                    k = counts.get(v, 0)
                    value *= _falling(e, k) * moments.raw[v, e - k]
                if value == 0:
                    continue
                for perm in set(itertools.permutations(combo)):
                    T[perm] += value
        out.append(DenseTensor(T))
    return out


def chaos_eval(A: DenseTensor, x, means) -> np.ndarray | float:
    """``sum_i a_i prod_k (x_{i_k} - m_{i_k})`` at a point or each row of an array."""
    x = np.asarray(x, dtype=float)
    m = np.asarray(means, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != A.dim or m.shape != (A.dim,):
        raise PolynomialError("shape mismatch between tensor, points and means")
    y = x - m
    out = A.values
    # contract the last axis repeatedly, carrying the sample axis in front
    res = np.broadcast_to(out, (y.shape[0],) + out.shape)
    for _ in range(A.order):
        res = np.einsum("z...i,zi->z...", res, y)
    return float(res[0]) if single else res


@dataclass(frozen=True)
class HoeffdingQuadratic:
    """``Q(x) = chaos(x) + 2 <linear, x - m> + constant`` for a quadratic form."""

    chaos: np.ndarray
    linear: np.ndarray
    constant: float
    means: np.ndarray
    variances: np.ndarray

    def quadratic(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.einsum("zi,ij,zj->z", x, self.chaos, x)

    def parts(self, x):
        """Return (centered chaos, linear term, constant) at each row of x."""
        y = np.atleast_2d(np.asarray(x, dtype=float)) - self.means
        return np.einsum("zi,ij,zj->z", y, self.chaos, y), y @ self.linear, self.constant

    @property
    def linear_variance(self) -> float:
        return float(np.sum(self.linear**2 * self.variances))


def _check_quadratic(A) -> np.ndarray:
    m = A.values if isinstance(A, DenseTensor) else np.asarray(A, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise PolynomialError("need a square matrix")
    tol = 1e-12 * max(1.0, float(np.max(np.abs(m))))
    if not np.allclose(m, m.T, rtol=0, atol=tol):
        raise NotSymmetricError("matrix is not symmetric")
    if np.any(np.abs(np.diag(m)) > tol):
        raise DiagonalNotVanishingError("matrix diagonal does not vanish")
    return m


def hoeffding_quadratic(A, means, variances) -> HoeffdingQuadratic:
    m = _check_quadratic(A)
    mu = np.asarray(means, dtype=float)
    var = np.asarray(variances, dtype=float)
    if mu.shape != (m.shape[0],) or var.shape != mu.shape:
        raise PolynomialError("means and variances need length n")
    if np.any(var < 0):
        raise PolynomialError("variances must be nonnegative")
    linear = m @ mu
    return HoeffdingQuadratic(m, linear, float(mu @ m @ mu), mu, var)


def mean_field_ratio(A, means, variances) -> float:
    """``sum_i c_i^2 Var(X_i) / ||A||_HS^2`` with ``c = A means``."""
    h = hoeffding_quadratic(A, means, variances)
    hs2 = float(np.sum(h.chaos**2))
    if hs2 == 0:
        raise PolynomialError("zero matrix")
    return h.linear_variance / hs2
