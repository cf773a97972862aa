"""Tail bounds of the form ``prefactor * exp(-(1/C) * min_k (t / scale_k)^exponent_k)``."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .distributions import DistributionSpec
from .partition_norms import all_partition_norms, decomposition_norm
from .tensors import DenseTensor, NotSymmetricError, TensorError, enumerate_partitions

ALLOWED_ALPHA_MSG = "alpha must lie in (0, 1] or equal 2"


class BoundError(ValueError):
    """Invalid input to a bound builder."""


@dataclass(frozen=True)
class TailBound:
    """``evaluate(t) = prefactor * exp(-(1/constant_C) * min_k (t/scale_k)^exponent_k)``.

    An empty term list means every regime was vacuous (all norms zero) and the
    bound degenerates to ``prefactor``.
    """

    terms: tuple[tuple[float, float], ...]
    prefactor: float = 2.0
    constant_C: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        terms = tuple((float(s), float(e)) for s, e in self.terms)
        if any(not (s > 0 and math.isfinite(s)) or not e > 0 for s, e in terms):
            raise BoundError("terms need positive finite scales and positive exponents")
        if not self.constant_C > 0:
            raise BoundError("constant_C must be positive")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_terms(cls, terms, prefactor=2.0, constant_C=1.0, meta=None, group=True) -> "TailBound":
        """Drop zero-scale terms (noted in meta) and optionally group equal exponents."""
        meta = dict(meta or {})
        kept = [(float(s), float(e)) for s, e in terms if s > 0]
        dropped = len(list(terms)) - len(kept)
        if dropped:
            meta["dropped_zero_terms"] = dropped
        if group:
            kept = group_terms(kept)
        return cls(tuple(kept), prefactor, constant_C, meta)

    def with_constant(self, C: float) -> "TailBound":
        return replace(self, constant_C=float(C))

    def exponent_value(self, t):
        """``min_k (t/scale_k)^exponent_k`` (inf for an empty bound)."""
        t = np.asarray(t, dtype=float)
        if not self.terms:
            return np.full(t.shape, np.inf) if t.ndim else math.inf
        vals = np.min([(t / s) ** e for s, e in self.terms], axis=0)
        return vals if t.ndim else float(vals)

    def evaluate(self, t):
        if not self.terms:
            t = np.asarray(t, dtype=float)
            return np.full(t.shape, self.prefactor) if t.ndim else self.prefactor
        return self.prefactor * np.exp(-self.exponent_value(t) / self.constant_C)

    def probability(self, t):
        """``min(1, evaluate(t))``."""
        return np.minimum(1.0, self.evaluate(t))

    def log_evaluate(self, t):
        return math.log(self.prefactor) - self.exponent_value(t) / self.constant_C

    def active_term(self, t: float) -> int:
        """Index of the term attaining the minimum at ``t``."""
        if not self.terms:
            raise BoundError("empty bound has no active term")
        return int(np.argmin([(t / s) ** e for s, e in self.terms]))

    @property
    def smallest_exponent(self) -> float:
        return min(e for _, e in self.terms)

    @property
    def largest_exponent(self) -> float:
        return max(e for _, e in self.terms)

    def crossovers(self) -> list[float]:
        """Values of t where the minimizing term changes, increasing.

        In log-log coordinates each term is a line with slope equal to its
        exponent, so the minimum is their lower envelope.
        """
        if len(self.terms) < 2:
            return []
        lines = sorted(((e, -e * math.log(s)) for s, e in self.terms), key=lambda x: (-x[0], x[1]))
        # sweep from small t (steepest line is smallest there) to large t
        current = lines[0]
        out = []
        x = -math.inf
        while True:
            best = None
            for e, b in lines:
                if e >= current[0]:
                    continue
                xc = (b - current[1]) / (current[0] - e)
                if xc > x and (best is None or xc < best[0] or (xc == best[0] and e < best[1][0])):
                    best = (xc, (e, b))
            if best is None:
                return out
            x, current = best
            out.append(math.exp(x))

    def to_records(self) -> list[dict]:
        source = self.meta.get("source", "")
        return [
            {"scale": s, "exponent": e, "C": self.constant_C, "prefactor": self.prefactor, "source": source}
            for s, e in self.terms
        ]


def group_terms(terms: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Keep the largest scale per exponent, ordered by decreasing exponent."""
    best: dict[float, tuple[float, float]] = {}
    for s, e in terms:
        key = round(e, 12)
        if key not in best or s > best[key][0]:
            best[key] = (s, e)
    return [best[k] for k in sorted(best, reverse=True)]


def deviation_at_confidence(bound: TailBound, x: float) -> float:
    """Level t with ``min_k (t/scale_k)^exponent_k = x``, i.e. ``max_k scale_k x^(1/exponent_k)``."""
    if not bound.terms:
        raise BoundError("empty bound")
    if not x > 0:
        raise BoundError("x must be positive")
    return max(s * x ** (1.0 / e) for s, e in bound.terms)


def _check_alpha(alpha: float, allow_two: bool = True) -> None:
    if not (0 < alpha <= 1 or (allow_two and alpha == 2)):
        raise BoundError(ALLOWED_ALPHA_MSG)


def _check_M(M: float) -> None:
    if not M > 0:
        raise BoundError("M must be positive")


# -- chaos bounds ------------------------------------------------------------------


def chaos_terms(A: DenseTensor, q: int, M: float, **norm_opts) -> list[tuple[float, float]]:
    """Scale ``M^d ||A||_J`` with exponent ``2/|J|`` for each class of partitions of [qd]."""
    norms = all_partition_norms(A, q, **norm_opts)
    seen = {}
    for J, res in norms.items():
        key = res.decomposition.parts
        if key not in seen:
            seen[key] = (M**A.order * res.value, 2.0 / len(J))
    return list(seen.values())


def chaos_tail_bound(A: DenseTensor, q: int, M: float, **norm_opts) -> TailBound:
    """Tail bound for a chaos of order d in variables with ``||X_i||_psi_(2/q) <= M``."""
    _check_M(M)
    if q < 1:
        raise BoundError("q must be a positive integer")
    A.require_chaos_ready()
    if q * A.order > 8:
        raise BoundError("q*d must be at most 8")
    return TailBound.from_terms(
        chaos_terms(A, q, M, **norm_opts), meta={"source": "chaos", "q": q, "M": M, "d": A.order}
    )


def _relabel(part_positions: Sequence[int], free: Sequence[int]) -> tuple[int, ...]:
    return tuple(free.index(p) + 1 for p in part_positions)


def alpha_chaos_terms(values: np.ndarray, alpha: float, M: float, **norm_opts) -> list[tuple[float, float]]:
    """Terms ``(M^d max_{i_I} ||A_{i_I^c}||_J, 2 alpha / (2|I| + alpha |J|))`` over I and J in P(I^c)."""
    d, n = values.ndim, values.shape[0]
    terms = []
    for size in range(d + 1):
        for I in itertools.combinations(range(1, d + 1), size):
            free = [p for p in range(1, d + 1) if p not in I]
            if not free:
                terms.append((M**d * float(np.max(np.abs(values))), 2 * alpha / (2 * d)))
                continue
            partitions = enumerate_partitions(len(free))
            for J in partitions:
                parts = [tuple(free[k - 1] for k in blk) for blk in J.blocks]
                local = [_relabel(p, free) for p in parts]
                best = 0.0
                for fixed in itertools.product(range(n), repeat=len(I)):
                    index = [slice(None)] * d
                    for p, v in zip(I, fixed):
                        index[p - 1] = v
                    sub = values[tuple(index)]
                    best = max(best, decomposition_norm(sub, local, **norm_opts))
                terms.append((M**d * best, 2 * alpha / (2 * len(I) + alpha * len(J))))
    return terms


def chaos_tail_bound_alpha(A: DenseTensor, alpha: float, M: float, **norm_opts) -> TailBound:
    """Tail bound for a chaos in variables with ``||X_i||_psi_alpha <= M``, alpha in (0, 1]."""
    _check_M(M)
    _check_alpha(alpha, allow_two=False)
    A.require_chaos_ready()
    if A.order > 3:
        raise BoundError("the alpha form supports d <= 3")
    return TailBound.from_terms(
        alpha_chaos_terms(A.values, alpha, M, **norm_opts),
        meta={"source": "chaos_alpha", "alpha": alpha, "M": M, "d": A.order},
    )


# -- quadratic forms -----------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticNorms:
    hs: float
    op: float
    max_row: float
    max_entry: float


def quadratic_norms(A: DenseTensor | np.ndarray) -> QuadraticNorms:
    m = A.values if isinstance(A, DenseTensor) else np.asarray(A, dtype=float)
    return QuadraticNorms(
        hs=float(np.linalg.norm(m)),
        op=float(np.linalg.norm(m, 2)),
        max_row=float(np.max(np.linalg.norm(m, axis=1))),
        max_entry=float(np.max(np.abs(m))),
    )


def hanson_wright(
    A: DenseTensor,
    M: float,
    q: Optional[int] = None,
    alpha: Optional[float] = None,
    variances: Optional[Sequence[float]] = None,
    simple: bool = False,
) -> TailBound:
    """Quadratic-form bound around ``sum_i sigma_i^2 a_ii``; give exactly one of q or alpha.

    Four regimes with scales ``M^2`` times the Hilbert-Schmidt, operator,
    max-row and max-entry norms; ``simple`` keeps the Hilbert-Schmidt and
    operator terms with exponents 2 and alpha/2.  The centering value is
    stored in ``meta["centering"]``.
    """
    _check_M(M)
    if A.order != 2:
        raise BoundError("hanson_wright needs a matrix")
    if not A.is_symmetric:
        raise NotSymmetricError("hanson_wright needs a symmetric matrix")
    if (q is None) == (alpha is None):
        raise BoundError("give exactly one of q or alpha")
    if q is not None:
        if int(q) != q or q < 1:
            raise BoundError("q must be a positive integer")
        row_exp, max_exp, a_eff = 2.0 / (q + 1), 1.0 / q, 2.0 / q
    else:
        _check_alpha(alpha)
        row_exp, max_exp, a_eff = 2 * alpha / (2 + alpha), alpha / 2, alpha
    n = A.dim
    sig2 = np.ones(n) if variances is None else np.asarray(variances, dtype=float)
    if sig2.shape != (n,) or np.any(sig2 < 0):
        raise BoundError("variances must be a nonnegative vector of length n")
    centering = float(np.dot(sig2, np.diag(A.values)))
    nr = quadratic_norms(A)
    M2 = M * M
    if simple:
        raw = [(M2 * nr.hs, 2.0), (M2 * nr.op, a_eff / 2)]
    else:
        raw = [(M2 * nr.hs, 2.0), (M2 * nr.op, 1.0), (M2 * nr.max_row, row_exp), (M2 * nr.max_entry, max_exp)]
    meta = {
        "source": "hanson_wright_simple" if simple else "hanson_wright",
        "centering": centering,
        "q": q,
        "alpha": alpha,
        "M": M,
        "norms": {"hs": nr.hs, "op": nr.op, "max_row": nr.max_row, "max_entry": nr.max_entry},
    }
    return TailBound.from_terms(raw, meta=meta, group=False)


# -- polynomials ------------------------------------------------------------------------


def polynomial_tail_bound(
    f,
    dists: Sequence[DistributionSpec],
    q: Optional[int] = None,
    alpha: Optional[float] = None,
    M: Optional[float] = None,
    hs_only: bool = False,
    **norm_opts,
) -> TailBound:
    """Bound for ``|f(X) - E f(X)|`` built from the expected derivative tensors of f."""
    from .polynomial import MomentModel, expected_derivative_tensors

    if (q is None) == (alpha is None):
        raise BoundError("give exactly one of q or alpha")
    if alpha is not None:
        _check_alpha(alpha)
    elif q < 1:
        raise BoundError("q must be a positive integer")
    D = f.degree
    if D < 1:
        raise BoundError("polynomial must have degree >= 1")
    if hs_only and D > 6:
        raise BoundError("HS-only mode supports degree <= 6")
    if not hs_only and D > 3:
        raise BoundError("full mode supports degree <= 3")
    if M is None:
        known = [d.psi_norm for d in dists]
        if any(k is None for k in known):
            raise BoundError("M not given and some distributions lack a psi bound")
        M = max(known)
    _check_M(M)
    tensors = expected_derivative_tensors(f, MomentModel.from_distributions(dists, D))
    a_eff = alpha if alpha is not None else 2.0 / q
    terms = []
    for d, T in enumerate(tensors, start=1):
        if not np.any(T.values):
            continue
        if hs_only:
            terms.append((M**d * T.hs_norm(), a_eff / d))
        elif q is not None or alpha == 2:
            # alpha = 2 is the subgaussian case q = 1
            qq = 1 if q is None else q
            if qq * d > 8:
                raise BoundError("q*d must be at most 8 in full mode")
            terms.extend(chaos_terms(T, qq, M, **norm_opts))
        else:
            terms.extend(alpha_chaos_terms(T.values, alpha, M, **norm_opts))
    return TailBound.from_terms(
        terms, meta={"source": "polynomial_hs" if hs_only else "polynomial", "degree": D, "M": M}
    )


# -- moments to tails --------------------------------------------------------------------


def moments_to_tail(C_coeffs: Sequence[float]) -> TailBound:
    """Tail bound from moment growth ``||Z||_p <= sum_k (C_k p)^(k/2)``.

    Terms ``(C_k^(k/2), 2/k)`` with ``constant_C = 2 (L e)^(2/r) / log 2`` where L
    counts positive coefficients and r is the first positive index.
    """
    C = [float(c) for c in C_coeffs]
    if any(c < 0 for c in C):
        raise BoundError("coefficients must be nonnegative")
    positive = [k for k, c in enumerate(C, start=1) if c > 0]
    if not positive:
        raise BoundError("need at least one positive coefficient")
    L, r = len(positive), positive[0]
    terms = [(C[k - 1] ** (k / 2), 2.0 / k) for k in positive]
    constant = 2 * (L * math.e) ** (2.0 / r) / math.log(2)
    return TailBound(tuple(terms), 2.0, constant, {"source": "moments", "L": L, "r": r})


__all__ = [
    "BoundError",
    "TailBound",
    "TensorError",
    "chaos_tail_bound",
    "chaos_tail_bound_alpha",
    "deviation_at_confidence",
    "group_terms",
    "hanson_wright",
    "moments_to_tail",
    "polynomial_tail_bound",
    "quadratic_norms",
]
