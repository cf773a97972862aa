"""Partition norms of tensors.

For a partition J of [q*d], the norm of A is the supremum of
``|sum_i a_i prod_j x_j(i restricted to P_j)|`` over unit blocks ``x_j``, where
the parts ``P_j`` are given by ``blockify(J, q, d)``.  Closed forms are used
where known, alternating block maximization otherwise, and a grid search
serves as an independent oracle on tiny problems.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .tensors import (
    Decomposition,
    DenseTensor,
    SetPartition,
    TensorError,
    block_positions,
    blockify,
    enumerate_partitions,
)

METHODS = ("closed_form", "alternating", "brute_force")
MAX_GROUND = 8
BRUTE_FORCE_MAX_EVALS = 2 * 10**8

Parts = tuple[tuple[int, ...], ...]


@dataclass
class NormResult:
    value: float
    partition: Optional[SetPartition]
    decomposition: Decomposition
    method: str
    certificate: Optional[tuple[np.ndarray, ...]] = None
    iterations: int = 0
    restarts: int = 0
    converged: bool = True
    trace: list = field(default_factory=list, repr=False)

    def __float__(self):
        return float(self.value)


# -- multilinear form helpers ------------------------------------------------


def _letters(part: Sequence[int]) -> str:
    return "".join(chr(ord("a") + p - 1) for p in part)


class _Form:
    """Contractions of a tensor against blocks indexed by ``parts``; batched over restarts."""

    def __init__(self, values: np.ndarray, parts: Parts):
        self.values = values
        self.parts = parts
        self.d = values.ndim
        self.n = values.shape[0] if values.ndim else 1
        self._paths: dict[int, list] = {}
        full = _letters(range(1, self.d + 1))
        self._subs = []
        for j in range(len(parts)):
            ops = [full] + ["z" + _letters(p) for k, p in enumerate(parts) if k != j]
            self._subs.append(",".join(ops) + "->z" + _letters(parts[j]))

    def contract(self, blocks: list[np.ndarray], j: int) -> np.ndarray:
        others = [b for k, b in enumerate(blocks) if k != j]
        if not others:
            return np.broadcast_to(self.values, blocks[j].shape).copy()
        if self.values.size * others[0].shape[0] <= 20_000:
            # tiny operands: the direct kernel beats path planning overhead
            return np.einsum(self._subs[j], self.values, *others)
        if j not in self._paths:
            self._paths[j] = np.einsum_path(self._subs[j], self.values, *others, optimize="greedy")[0]
        return np.einsum(self._subs[j], self.values, *others, optimize=self._paths[j])

    def value(self, blocks: list[np.ndarray]) -> np.ndarray:
        """Signed value of the form for each restart."""
        g = self.contract(blocks, 0)
        return np.sum((g * blocks[0]).reshape(g.shape[0], -1), axis=1)


def multilinear_value(A: DenseTensor | np.ndarray, parts: Sequence[Sequence[int]], blocks: Sequence[np.ndarray]) -> float:
    """Signed value of ``sum_i a_i prod_j blocks[j](i_{parts[j]})``."""
    values = A.values if isinstance(A, DenseTensor) else np.asarray(A, dtype=float)
    parts = tuple(tuple(p) for p in parts)
    form = _Form(values, parts)
    return float(form.value([np.asarray(b, dtype=float)[None] for b in blocks])[0])


def _normalize(g: np.ndarray, old: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    axes = tuple(range(1, g.ndim))
    norms = np.sqrt(np.sum(g * g, axis=axes))
    safe = np.where(norms > 0, norms, 1.0).reshape((-1,) + (1,) * (g.ndim - 1))
    new = np.where((norms > 0).reshape(safe.shape), g / safe, old)
    return new, norms


# -- closed forms ------------------------------------------------------------------


def _op_norm(m: np.ndarray) -> float:
    return float(np.linalg.norm(m, 2)) if m.size else 0.0


def _unfold(values: np.ndarray, rows: Sequence[int]) -> np.ndarray:
    """Matrix with rows indexed by the (1-based) positions ``rows``."""
    d, n = values.ndim, values.shape[0]
    rows = [p - 1 for p in rows]
    cols = [k for k in range(d) if k not in rows]
    return values.transpose(rows + cols).reshape(n ** len(rows), -1)


def closed_form_value(values: np.ndarray, decomposition: Decomposition) -> Optional[float]:
    """Norm for decompositions with a known closed form, else None."""
    parts = decomposition.parts
    d = decomposition.ground_size
    full = tuple(range(1, d + 1))
    if len(parts) == 1:
        return float(np.linalg.norm(values.ravel()))
    cover = {p: sum(1 for part in parts if p in part) for p in full}
    if all(c >= 2 for c in cover.values()):
        return float(np.max(np.abs(values)))
    if len(parts) == 2 and not set(parts[0]) & set(parts[1]):
        return _op_norm(_unfold(values, parts[0]))
    if d == 2:
        both = decomposition.count((1, 2))
        rows = decomposition.count((1,))
        cols = decomposition.count((2,))
        if both == 1 and rows >= 1 and cols == 0:
            return float(np.max(np.linalg.norm(values, axis=1)))
        if both == 1 and cols >= 1 and rows == 0:
            return float(np.max(np.linalg.norm(values, axis=0)))
        if both == 0 and rows >= 2 and cols == 1:
            return float(np.max(np.linalg.norm(values, axis=1)))
        if both == 0 and cols >= 2 and rows == 1:
            return float(np.max(np.linalg.norm(values, axis=0)))
    return None


def norm_closed_form(A: DenseTensor, J: SetPartition, q: int) -> Optional[float]:
    """Closed-form norm when the shape of ``blockify(J)`` is catalogued, else None."""
    return closed_form_value(A.values, blockify(J, q, A.order))


# -- alternating maximization --------------------------------------------------------


def _top_vector(values: np.ndarray, positions: Sequence[int]) -> np.ndarray:
    """Dominant left singular vector of the unfolding onto ``positions`` (1-based)."""
    n, k = values.shape[0], len(positions)
    if k == values.ndim:
        nrm = np.linalg.norm(values.ravel())
        return values / nrm if nrm > 0 else np.full(values.shape, n ** (-k / 2))
    mat = _unfold(values, sorted(positions))
    if not np.any(mat):
        u = np.zeros(mat.shape[0])
        u[0] = 1.0
    else:
        u = np.linalg.svd(mat, full_matrices=False)[0][:, 0]
    return u.reshape((n,) * k)


def _structured_starts(values: np.ndarray, parts: Parts) -> list[list[np.ndarray]]:
    """Starting points that fix a subset of positions at the heaviest slice.

    For every subset S of positions, the coordinates on S are fixed at the
    slice of largest Hilbert-Schmidt norm; parts inside S become point masses
    and the remaining coordinates follow dominant singular vectors of that
    slice.  These include the maximizers of every catalogued closed form.
    """
    d, n = values.ndim, values.shape[0]
    starts = []
    for size in range(d + 1):
        for S in itertools.combinations(range(1, d + 1), size):
            free = [p for p in range(1, d + 1) if p not in S]
            if S:
                sq = values**2
                slice_norms = sq.sum(axis=tuple(p - 1 for p in free)) if free else sq
                star = np.unravel_index(int(np.argmax(slice_norms)), slice_norms.shape)
                fixed = dict(zip(S, star))
                index = tuple(fixed.get(p, slice(None)) for p in range(1, d + 1))
                sub = values[index]
            else:
                fixed, sub = {}, values
            blocks = []
            for part in parts:
                inner = [p for p in part if p not in fixed]
                shape = (n,) * len(part)
                x = np.zeros(shape)
                if inner:
                    # positions of `sub` are the free positions in increasing order
                    local = [free.index(p) + 1 for p in inner]
                    u = _top_vector(sub, local) if sub.ndim else np.ones(())
                    index = tuple(fixed.get(p, slice(None)) for p in part)
                    x[index] = u
                else:
                    x[tuple(fixed[p] for p in part)] = 1.0
                blocks.append(x)
            starts.append(blocks)
    return starts


def _random_starts(parts: Parts, n: int, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    out = []
    for part in parts:
        g = rng.standard_normal((count,) + (n,) * len(part))
        g /= np.sqrt(np.sum(g * g, axis=tuple(range(1, g.ndim)), keepdims=True))
        out.append(g)
    return out


def _distinct_runs(blocks: list[np.ndarray], gap: float = 1e-15) -> np.ndarray:
    """Indices of runs whose unit blocks differ (up to sign per block) from every earlier run."""
    same = None
    for b in blocks:
        f = b.reshape(b.shape[0], -1)
        close = np.abs(f @ f.T) >= 1.0 - gap
        same = close if same is None else same & close
    dup = np.tril(same, -1).any(axis=1)
    return np.flatnonzero(~dup)


def _ascend(form: _Form, blocks: list[np.ndarray], max_iters: int, tol: float, trace: Optional[list]):
    """Cyclic exact block updates until each run's per-sweep relative change is below tol.

    Without tracing, runs that have converged are frozen and runs that have
    merged with another (equal blocks up to sign) are dropped, since they
    would follow identical trajectories.
    """
    done: list[list[np.ndarray]] = [[] for _ in blocks]
    prev = None
    iterations = 0
    converged = False
    for it in range(max_iters):
        iterations = it + 1
        for j in range(len(blocks)):
            g = form.contract(blocks, j)
            blocks[j], vals = _normalize(g, blocks[j])
            if trace is not None:
                trace.append(vals.copy())
        if prev is not None:
            settled = np.abs(vals - prev) <= tol * np.maximum(np.abs(prev), 1e-300)
            if settled.all():
                converged = True
                break
            if trace is None and settled.any():
                for j, b in enumerate(blocks):
                    done[j].append(b[settled])
                blocks = [b[~settled] for b in blocks]
                vals = vals[~settled]
        prev = vals
        if trace is None and it % 10 == 9 and blocks[0].shape[0] > 1:
            keep = _distinct_runs(blocks)
            if len(keep) < blocks[0].shape[0]:
                blocks = [b[keep] for b in blocks]
                prev = prev[keep]
    if done[0]:
        blocks = [np.concatenate(d + [b]) for d, b in zip(done, blocks)]
    return blocks, iterations, converged


def optimize_parts(
    values: np.ndarray,
    parts: Sequence[Sequence[int]],
    restarts: int = 20,
    max_iters: int = 500,
    tol: float = 1e-10,
    seed: int = 0,
    warm_starts: Sequence[Sequence[np.ndarray]] = (),
    structured: bool = True,
    trace: Optional[list] = None,
):
    """Alternating maximization of the multilinear form over unit blocks.

    Returns ``(value, certificate, iterations, converged)``; the certificate is
    None for the zero tensor.
    """
    values = np.asarray(values, dtype=float)
    parts = tuple(tuple(p) for p in parts)
    n = values.shape[0]
    if not np.any(values):
        return 0.0, None, 0, True
    form = _Form(values, parts)
    rng = np.random.default_rng(seed)
    batches = [_random_starts(parts, n, restarts, rng)] if restarts > 0 else []
    extra = list(warm_starts) + (_structured_starts(values, parts) if structured else [])
    if extra:
        stacked = []
        for j, part in enumerate(parts):
            arr = np.stack([np.asarray(s[j], dtype=float) for s in extra])
            nrm = np.sqrt(np.sum(arr * arr, axis=tuple(range(1, arr.ndim)), keepdims=True))
            stacked.append(arr / np.where(nrm > 0, nrm, 1.0))
        batches.append(stacked)
    blocks = [np.concatenate([b[j] for b in batches]) for j in range(len(parts))]
    blocks, iterations, converged = _ascend(form, blocks, max_iters, tol, trace)
    signed = form.value(blocks)
    vals = np.abs(signed)
    best = int(np.argmax(np.round(vals, 12)))
    cert = tuple(b[best].copy() for b in blocks)
    if signed[best] < 0:
        cert = (-cert[0],) + cert[1:]
    return float(vals[best]), cert, iterations, converged


def norm_alternating(
    A: DenseTensor,
    J: SetPartition,
    q: int,
    restarts: int = 20,
    max_iters: int = 500,
    tol: float = 1e-10,
    seed: int = 0,
    warm_starts: Sequence[Sequence[np.ndarray]] = (),
    trace: bool = False,
) -> NormResult:
    """Lower bound on the partition norm by alternating block maximization.

    Each block update replaces one block by its normalized contraction against
    the others, which is the exact maximizer in that block, so the objective
    never decreases.  ``restarts`` random starts run alongside structured
    starts (heaviest slices and dominant singular vectors) and any
    ``warm_starts``; the best run wins.
    """
    dec = blockify(J, q, A.order)
    log = [] if trace else None
    value, cert, iters, conv = optimize_parts(
        A.values, dec.parts, restarts, max_iters, tol, seed, warm_starts, trace=log
    )
    return NormResult(
        value, J, dec, "alternating", cert, iters, restarts, conv, log if trace else []
    )


# -- brute force ---------------------------------------------------------------------


def _sphere_grid(dim: int, points: int) -> np.ndarray:
    """Half of the unit sphere in R^dim on a hyperspherical angle grid."""
    if dim == 1:
        return np.ones((1, 1))
    full = np.linspace(0.0, math.pi, points + 1)
    half = full[:-1]
    angles = [full] * (dim - 2) + [half]
    mesh = np.meshgrid(*angles, indexing="ij")
    flat = [m.ravel() for m in mesh]
    out = np.empty((flat[0].size, dim))
    sin_prod = np.ones(flat[0].size)
    for k in range(dim - 1):
        out[:, k] = sin_prod * np.cos(flat[k])
        sin_prod = sin_prod * np.sin(flat[k])
    out[:, dim - 1] = sin_prod
    return out


def _sigma_max(m: np.ndarray) -> np.ndarray:
    """Largest singular value of each matrix in a stack."""
    if m.shape[-2:] == (2, 2):
        a, b, c, e = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
        fro = a * a + b * b + c * c + e * e
        det = a * e - b * c
        return np.sqrt(0.5 * (fro + np.sqrt(np.maximum(fro * fro - 4 * det * det, 0.0))))
    return np.linalg.norm(m, 2, axis=(-2, -1))


def decomposition_bruteforce(values: np.ndarray, parts: Sequence[Sequence[int]], grid_points: int = 10_000, chunk: int = 200_000) -> float:
    """Grid search over all blocks but the two largest, which are solved exactly.

    For fixed grid blocks the form is bilinear in the two remaining blocks, so
    its maximum is the top singular value of the corresponding matrix.
    """
    values = np.asarray(values, dtype=float)
    parts = [tuple(p) for p in parts]
    n, d = values.shape[0], values.ndim
    if not np.any(values):
        return 0.0
    if len(parts) == 1:
        return float(np.linalg.norm(values.ravel()))
    order = sorted(range(len(parts)), key=lambda k: -len(parts[k]))
    exact, gridded = order[:2], order[2:]
    sizes = [n ** len(parts[k]) for k in gridded]
    if any(s > 4 for s in sizes):
        raise TensorError("brute force needs gridded blocks of dimension <= 4")
    grids = [_sphere_grid(s, grid_points) for s in sizes]
    total = math.prod(len(g) for g in grids)
    if total > BRUTE_FORCE_MAX_EVALS:
        raise TensorError(f"brute force grid of {total} points is too large")
    u_part, v_part = parts[exact[0]], parts[exact[1]]
    # positions shared by the two exact blocks appear once in the contraction
    # and are scattered onto the matrix diagonal afterwards
    v_only = [p for p in v_part if p not in u_part]
    full = _letters(range(1, d + 1))
    out = "z" + _letters(u_part) + _letters(v_only)
    if not gridded:
        t = np.einsum(full + "->" + out[1:], values)[None]
        return float(_sigma_max(_bilinear_matrix(t, u_part, v_part, v_only, n))[0])
    expr = ",".join([full] + ["z" + _letters(parts[k]) for k in gridded]) + "->" + out
    best = 0.0
    flat_index = np.indices([len(g) for g in grids]).reshape(len(grids), -1)
    for start in range(0, total, chunk):
        sel = flat_index[:, start:start + chunk]
        ops = [
            grids[k][sel[k]].reshape((-1,) + (n,) * len(parts[gridded[k]]))
            for k in range(len(gridded))
        ]
        t = np.einsum(expr, values, *ops, optimize="greedy")
        best = max(best, float(np.max(_sigma_max(_bilinear_matrix(t, u_part, v_part, v_only, n)))))
    return best


def _bilinear_matrix(t, u_part, v_part, v_only, n):
    """Scatter coefficients c(z, i_u, i_vonly) into matrices M[z, i_u, i_v]."""
    z = t.shape[0]
    ku, kv = len(u_part), len(v_part)
    m = np.zeros((z,) + (n,) * ku + (n,) * kv)
    # index grids for u coordinates and v-only coordinates
    u_idx = np.indices((n,) * ku).reshape(ku, -1)
    vo_idx = np.indices((n,) * len(v_only)).reshape(len(v_only), -1) if v_only else np.zeros((0, 1), dtype=int)
    for a in range(u_idx.shape[1]):
        coords_u = dict(zip(u_part, u_idx[:, a]))
        for b in range(vo_idx.shape[1]):
            coords_v = dict(zip(v_only, vo_idx[:, b]))
            vcoord = tuple(coords_u[p] if p in coords_u else coords_v[p] for p in v_part)
            src = (slice(None),) + tuple(u_idx[:, a]) + tuple(vo_idx[:, b])
            m[(slice(None),) + tuple(u_idx[:, a]) + vcoord] = t[src]
    return m.reshape(z, n**ku, n**kv)


def norm_bruteforce(A: DenseTensor, J: SetPartition, q: int, grid_points: int = 10_000) -> float:
    """Grid-search oracle for tiny problems (each gridded block of dimension <= 4)."""
    return decomposition_bruteforce(A.values, blockify(J, q, A.order).parts, grid_points)


# -- all partitions ----------------------------------------------------------------------


def _lift(cert: Sequence[np.ndarray], parts_from: Parts, merge: tuple[int, int], n: int) -> list[np.ndarray]:
    """Certificate for the decomposition obtained by merging two parts (same form value)."""
    a, b = merge
    pa, pb = parts_from[a], parts_from[b]
    union = tuple(sorted(set(pa) | set(pb)))
    la, lb, lu = _letters(pa), _letters(pb), _letters(union)
    merged = np.einsum(f"{la},{lb}->{lu}", cert[a], cert[b])
    rest = [c for k, c in enumerate(cert) if k not in (a, b)]
    return rest + [merged]


def _canonical_order(parts: Sequence[tuple[int, ...]]) -> list[int]:
    return sorted(range(len(parts)), key=lambda k: parts[k])


def all_partition_norms(
    A: DenseTensor,
    q: int,
    restarts: int = 20,
    max_iters: int = 500,
    tol: float = 1e-10,
    seed: int = 0,
    use_closed_forms: bool = True,
) -> dict[SetPartition, NormResult]:
    """Norms for every partition of [q*d], one computation per decomposition class.

    Classes are processed from most to fewest parts; each alternating run is
    warm-started with certificates lifted from classes one merge finer, so the
    computed values are monotone under refinement.
    """
    d = A.order
    if q < 1 or q * d > MAX_GROUND:
        raise TensorError(f"q*d must lie in 1..{MAX_GROUND}")
    partitions = enumerate_partitions(q * d)
    classes: dict[Parts, list[SetPartition]] = {}
    for J in partitions:
        classes.setdefault(blockify(J, q, d).parts, []).append(J)

    # one-merge edges between classes with the part-index map of the merge
    edges: dict[Parts, list[tuple[Parts, tuple[int, int]]]] = {}
    for J in partitions:
        raw = block_positions(J, q)
        src = Decomposition(d, tuple(raw)).parts
        order = _canonical_order(raw)
        pos_in_canon = {orig: k for k, orig in enumerate(order)}
        for a, b in itertools.combinations(range(len(raw)), 2):
            merged_raw = [p for k, p in enumerate(raw) if k not in (a, b)]
            merged_raw.append(tuple(sorted(set(raw[a]) | set(raw[b]))))
            dst = Decomposition(d, tuple(merged_raw)).parts
            edges.setdefault(dst, [])
            key = (src, (pos_in_canon[a], pos_in_canon[b]))
            if key not in edges[dst]:
                edges[dst].append(key)

    certs: dict[Parts, Optional[tuple[np.ndarray, ...]]] = {}
    results: dict[Parts, NormResult] = {}
    n = A.dim
    for parts in sorted(classes, key=lambda p: (-len(p), p)):
        dec = Decomposition(d, parts)
        warm = []
        for src, (a, b) in edges.get(parts, []):
            cert = certs.get(src)
            if cert is None:
                continue
            lifted = _lift(cert, src, (a, b), n)
            raw_parts = [p for k, p in enumerate(src) if k not in (a, b)]
            raw_parts.append(tuple(sorted(set(src[a]) | set(src[b]))))
            warm.append([lifted[k] for k in _canonical_order(raw_parts)])
        closed = closed_form_value(A.values, dec) if use_closed_forms else None
        if closed is not None:
            # closed forms are exact; a short structured run supplies a certificate for lifting
            _, cert, iters, conv = optimize_parts(A.values, parts, 0, max_iters, tol, seed, warm)
            res = NormResult(closed, None, dec, "closed_form", cert, iters, 0, conv)
        else:
            value, cert, iters, conv = optimize_parts(
                A.values, parts, restarts, max_iters, tol, seed, warm
            )
            res = NormResult(value, None, dec, "alternating", cert, iters, restarts, conv)
        certs[parts] = cert
        results[parts] = res

    out = {}
    for parts, members in classes.items():
        base = results[parts]
        for J in members:
            out[J] = NormResult(
                base.value, J, base.decomposition, base.method, base.certificate,
                base.iterations, base.restarts, base.converged,
            )
    return out


def partition_norm(A: DenseTensor, J: SetPartition, q: int, **opts) -> NormResult:
    """Closed form when available, alternating maximization otherwise."""
    value = norm_closed_form(A, J, q)
    if value is not None:
        return NormResult(value, J, blockify(J, q, A.order), "closed_form")
    return norm_alternating(A, J, q, **opts)


def decomposition_norm(values: np.ndarray, parts: Sequence[Sequence[int]], **opts) -> float:
    """Norm of a raw array for an explicit decomposition of its positions."""
    values = np.asarray(values, dtype=float)
    dec = Decomposition(values.ndim, tuple(tuple(p) for p in parts))
    closed = closed_form_value(values, dec)
    if closed is not None:
        return closed
    return optimize_parts(values, dec.parts, **opts)[0]
