"""Dense d-tensors, set partitions, block decompositions and index masks.

Positions (tensor axes, partition elements) are 1-based throughout; coordinate
values along an axis are 0-based, as in numpy.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Iterator, Sequence

import numpy as np

MAX_ENTRIES = 10**7
MAX_PARTITION_GROUND = 10


class TensorError(ValueError):
    """Invalid tensor, partition or mask."""


class NotSymmetricError(TensorError):
    """A chaos operation received a tensor that is not symmetric."""


class DiagonalNotVanishingError(TensorError):
    """A chaos operation needs a tensor vanishing on generalized diagonals."""


# -- dense tensors -----------------------------------------------------------


class DenseTensor:
    """An order-d tensor with n entries per axis, stored densely and read-only."""

    __slots__ = ("_values",)

    def __init__(self, values):
        arr = np.array(values, dtype=float)
        if arr.ndim == 0:
            raise TensorError("a tensor needs order >= 1")
        if len(set(arr.shape)) != 1 or arr.shape[0] < 1:
            raise TensorError(f"all axes must have the same positive length, got {arr.shape}")
        if arr.size > MAX_ENTRIES:
            raise TensorError(f"n^d = {arr.size} exceeds the dense limit {MAX_ENTRIES}")
        if not np.all(np.isfinite(arr)):
            raise TensorError("tensor entries must be finite")
        arr.setflags(write=False)
        self._values = arr

    @classmethod
    def from_flat(cls, order: int, dim: int, flat: Sequence[float]) -> "DenseTensor":
        flat = np.asarray(flat, dtype=float)
        if order < 1 or dim < 1:
            raise TensorError("order and dim must be >= 1")
        if dim**order > MAX_ENTRIES:
            raise TensorError(f"n^d = {dim ** order} exceeds the dense limit {MAX_ENTRIES}")
        if flat.size != dim**order:
            raise TensorError(f"expected {dim ** order} entries, got {flat.size}")
        return cls(flat.reshape((dim,) * order))

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def order(self) -> int:
        return self._values.ndim

    @property
    def dim(self) -> int:
        return self._values.shape[0]

    def __repr__(self):
        return f"DenseTensor(order={self.order}, dim={self.dim})"

    def __eq__(self, other):
        return isinstance(other, DenseTensor) and np.array_equal(self._values, other._values)

    __hash__ = None

    def __mul__(self, c: float) -> "DenseTensor":
        return DenseTensor(self._values * float(c))

    __rmul__ = __mul__

    def _tol(self) -> float:
        return 1e-12 * max(1.0, float(np.max(np.abs(self._values))))

    @property
    def is_symmetric(self) -> bool:
        """Invariance under every axis permutation (exhaustive check)."""
        v, tol = self._values, self._tol()
        if self.order > 6:
            raise TensorError("symmetry check limited to order <= 6")
        # adjacent transpositions generate the symmetric group
        for k in range(self.order - 1):
            axes = list(range(self.order))
            axes[k], axes[k + 1] = axes[k + 1], axes[k]
            if not np.allclose(v, v.transpose(axes), rtol=0, atol=tol):
                return False
        return True

    @property
    def has_vanishing_diagonal(self) -> bool:
        """True when every entry with a repeated coordinate is zero."""
        if self.order == 1:
            return True
        mask = ~distinct_coordinates_mask(self.order, self.dim)
        return bool(np.all(np.abs(self._values[mask]) <= self._tol()))

    def require_chaos_ready(self, vanishing_diagonal: bool = True) -> None:
        if not self.is_symmetric:
            raise NotSymmetricError("tensor is not symmetric; see tensors.symmetrize")
        if vanishing_diagonal and not self.has_vanishing_diagonal:
            raise DiagonalNotVanishingError("tensor has nonzero generalized-diagonal entries")

    def hs_norm(self) -> float:
        return float(np.linalg.norm(self._values.ravel()))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self._values)))


def distinct_coordinates_mask(order: int, dim: int) -> np.ndarray:
    """Boolean array that is True where all coordinates are pairwise different."""
    mask = np.ones((dim,) * order, dtype=bool)
    for k, l in itertools.combinations(range(order), 2):
        mask &= ~_equal_axes(order, dim, k, l)
    return mask


def _equal_axes(order: int, dim: int, k: int, l: int) -> np.ndarray:
    idx = np.indices((dim,) * order, sparse=True)
    return idx[k] == idx[l]


def symmetrize(A: DenseTensor) -> DenseTensor:
    """Average over all axis permutations (order <= 4)."""
    if A.order > 4:
        raise TensorError("symmetrize supports order <= 4")
    perms = list(itertools.permutations(range(A.order)))
    total = sum(A.values.transpose(p) for p in perms)
    return DenseTensor(total / len(perms))


def format_tensor(A: DenseTensor) -> str:
    """Plain-text form: ``d n`` header then the entries in row-major order."""
    body = " ".join(repr(float(x)) for x in A.values.ravel())
    return f"{A.order} {A.dim}\n{body}\n"


def parse_tensor(text: str) -> DenseTensor:
    tokens = text.split()
    if len(tokens) < 2:
        raise TensorError("tensor text needs a 'd n' header")
    try:
        order, dim = int(tokens[0]), int(tokens[1])
        flat = [float(t) for t in tokens[2:]]
    except ValueError as exc:
        raise TensorError(f"malformed tensor text: {exc}") from exc
    return DenseTensor.from_flat(order, dim, flat)


def read_tensor(path) -> DenseTensor:
    with open(path, encoding="utf-8") as fh:
        return parse_tensor(fh.read())


def write_tensor(A: DenseTensor, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_tensor(A))


# -- set partitions ------------------------------------------------------------


@dataclass(frozen=True)
class SetPartition:
    """A partition of {1..m} with blocks sorted internally and by smallest element."""

    ground_size: int
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(sorted(tuple(sorted(set(b))) for b in self.blocks))
        if any(len(b) == 0 for b in blocks):
            raise TensorError("partition blocks must be nonempty")
        flat = [x for b in blocks for x in b]
        if sorted(flat) != list(range(1, self.ground_size + 1)):
            raise TensorError(f"blocks do not partition {{1..{self.ground_size}}}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]]) -> "SetPartition":
        blocks = [tuple(b) for b in blocks]
        return cls(sum(len(b) for b in blocks), tuple(blocks))

    @classmethod
    def parse(cls, text: str) -> "SetPartition":
        """Parse ``{1,3}|{2}|{4}``."""
        parts = [p.strip() for p in text.strip().split("|")]
        blocks = []
        for p in parts:
            m = re.fullmatch(r"\{\s*(\d+(?:\s*,\s*\d+)*)\s*\}", p)
            if not m:
                raise TensorError(f"malformed partition block {p!r}")
            blocks.append(tuple(int(x) for x in m.group(1).split(",")))
        return cls.from_blocks(blocks)

    @classmethod
    def discrete(cls, m: int) -> "SetPartition":
        return cls(m, tuple((i,) for i in range(1, m + 1)))

    @classmethod
    def trivial(cls, m: int) -> "SetPartition":
        return cls(m, (tuple(range(1, m + 1)),))

    def __len__(self):
        return len(self.blocks)

    def __str__(self):
        return "|".join("{" + ",".join(map(str, b)) + "}" for b in self.blocks)

    @property
    def is_discrete(self) -> bool:
        return len(self.blocks) == self.ground_size

    @property
    def is_trivial(self) -> bool:
        return len(self.blocks) == 1

    def merge(self, a: int, b: int) -> "SetPartition":
        """Partition obtained by merging blocks ``a`` and ``b`` (0-based block indices)."""
        if a == b:
            raise TensorError("cannot merge a block with itself")
        rest = [blk for k, blk in enumerate(self.blocks) if k not in (a, b)]
        return SetPartition(self.ground_size, tuple(rest) + (self.blocks[a] + self.blocks[b],))


def enumerate_partitions(m: int) -> list[SetPartition]:
    """All partitions of {1..m} in restricted-growth-string order."""
    if not 1 <= m <= MAX_PARTITION_GROUND:
        raise TensorError(f"m must lie in 1..{MAX_PARTITION_GROUND}")
    return [SetPartition(m, blocks) for blocks in _rgs_blocks(m)]


def _rgs_blocks(m: int) -> Iterator[tuple[tuple[int, ...], ...]]:
    labels = [0] * m

    def rec(pos, nblocks):
        if pos == m:
            blocks = [[] for _ in range(nblocks)]
            for i, lab in enumerate(labels):
                blocks[lab].append(i + 1)
            yield tuple(tuple(b) for b in blocks)
            return
        for lab in range(nblocks + 1):
            labels[pos] = lab
            yield from rec(pos + 1, max(nblocks, lab + 1))

    labels[0] = 0
    yield from rec(1, 1)


def bell_number(m: int) -> int:
    row = [1]
    for _ in range(m):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
    return row[0]


def refines(P: SetPartition, Q: SetPartition) -> bool:
    """True iff every block of P lies inside a block of Q."""
    if P.ground_size != Q.ground_size:
        raise TensorError("partitions have different ground sizes")
    owner = {x: k for k, blk in enumerate(Q.blocks) for x in blk}
    return all(len({owner[x] for x in blk}) == 1 for blk in P.blocks)


# -- decompositions ------------------------------------------------------------


@dataclass(frozen=True)
class Decomposition:
    """A multiset of nonempty subsets of {1..d} covering {1..d}, in sorted order."""

    ground_size: int
    parts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        parts = tuple(sorted(tuple(sorted(set(p))) for p in self.parts))
        if not parts or any(len(p) == 0 for p in parts):
            raise TensorError("decomposition parts must be nonempty")
        covered = set().union(*parts)
        if covered != set(range(1, self.ground_size + 1)):
            raise TensorError(f"parts do not cover {{1..{self.ground_size}}}")
        object.__setattr__(self, "parts", parts)

    def __len__(self):
        return len(self.parts)

    def __str__(self):
        return "[" + ",".join("{" + ",".join(map(str, p)) + "}" for p in self.parts) + "]"

    def count(self, part: Iterable[int]) -> int:
        part = tuple(sorted(part))
        return sum(1 for p in self.parts if p == part)


def block_positions(J: SetPartition, q: int) -> list[tuple[int, ...]]:
    """For each block of J (in J's order), the q-blocks it meets."""
    return [tuple(sorted({(e - 1) // q + 1 for e in blk})) for blk in J.blocks]


def blockify(J: SetPartition, q: int, d: int) -> Decomposition:
    """Which of the d consecutive q-blocks each block of J intersects."""
    if q < 1 or d < 1 or J.ground_size != q * d:
        raise TensorError(f"partition of {{1..{J.ground_size}}} is not a partition of [q*d] = [{q * d}]")
    return Decomposition(d, tuple(block_positions(J, q)))


# -- index masks ---------------------------------------------------------------


@dataclass(frozen=True)
class IndexMask:
    """Describes a set of multi-indices in [n]^d.

    ``kind`` is one of ``generalized_row`` (fixed coordinates at given
    positions), ``generalized_diagonal`` (coordinates equal across a position
    set), ``level_set`` (equality pattern exactly matches a partition of [d]),
    ``complement`` or ``intersection``.
    """

    kind: str
    positions: tuple[int, ...] = ()
    values: tuple[int, ...] = ()
    partition: SetPartition | None = None
    children: tuple["IndexMask", ...] = ()

    @classmethod
    def generalized_row(cls, positions: Sequence[int], values: Sequence[int]) -> "IndexMask":
        if len(positions) != len(values) or len(set(positions)) != len(positions):
            raise TensorError("row mask needs distinct positions with one value each")
        return cls("generalized_row", tuple(positions), tuple(int(v) for v in values))

    @classmethod
    def generalized_diagonal(cls, positions: Iterable[int]) -> "IndexMask":
        return cls("generalized_diagonal", tuple(sorted(set(positions))))

    @classmethod
    def level_set(cls, partition: SetPartition) -> "IndexMask":
        return cls("level_set", partition=partition)

    def complement(self) -> "IndexMask":
        return IndexMask("complement", children=(self,))

    def __and__(self, other: "IndexMask") -> "IndexMask":
        return IndexMask("intersection", children=(self, other))

    def indicator(self, order: int, dim: int) -> np.ndarray:
        """Boolean array over [n]^d."""
        shape = (dim,) * order
        if self.kind == "generalized_row":
            _check_positions(self.positions, order)
            if any(not 0 <= v < dim for v in self.values):
                raise TensorError("row mask coordinate out of range")
            idx = np.indices(shape, sparse=True)
            out = np.ones(shape, dtype=bool)
            for p, v in zip(self.positions, self.values):
                out &= idx[p - 1] == v
            return out
        if self.kind == "generalized_diagonal":
            _check_positions(self.positions, order)
            out = np.ones(shape, dtype=bool)
            for k, l in itertools.combinations(self.positions, 2):
                out &= _equal_axes(order, dim, k - 1, l - 1)
            return out
        if self.kind == "level_set":
            K = self.partition
            if K is None or K.ground_size != order:
                raise TensorError("level-set mask needs a partition of [d]")
            owner = {x: k for k, blk in enumerate(K.blocks) for x in blk}
            out = np.ones(shape, dtype=bool)
            for k, l in itertools.combinations(range(1, order + 1), 2):
                eq = _equal_axes(order, dim, k - 1, l - 1)
                out &= eq if owner[k] == owner[l] else ~eq
            return out
        if self.kind == "complement":
            return ~self.children[0].indicator(order, dim)
        if self.kind == "intersection":
            return reduce(np.logical_and, (c.indicator(order, dim) for c in self.children))
        raise TensorError(f"unknown mask kind {self.kind!r}")


def _check_positions(positions: Sequence[int], order: int) -> None:
    if any(not 1 <= p <= order for p in positions):
        raise TensorError(f"mask positions must lie in 1..{order}")


def apply_mask(A: DenseTensor, mask: IndexMask) -> DenseTensor:
    """Entrywise product of A with the 0/1 indicator of the mask."""
    return DenseTensor(np.where(mask.indicator(A.order, A.dim), A.values, 0.0))


# -- restricted tensors ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RestrictedTensor:
    """The tensor obtained from ``base`` by fixing the coordinates at ``fixed_positions``."""

    base: DenseTensor
    fixed_positions: tuple[int, ...]
    fixed_values: tuple[int, ...]

    @property
    def free_positions(self) -> tuple[int, ...]:
        return tuple(p for p in range(1, self.base.order + 1) if p not in self.fixed_positions)

    @property
    def order(self) -> int:
        return self.base.order - len(self.fixed_positions)

    @property
    def values(self) -> np.ndarray | float:
        index = [slice(None)] * self.base.order
        for p, v in zip(self.fixed_positions, self.fixed_values):
            index[p - 1] = v
        out = self.base.values[tuple(index)]
        return float(out) if self.order == 0 else out

    def __getitem__(self, free_index) -> float:
        if not isinstance(free_index, tuple):
            free_index = (free_index,)
        if len(free_index) != self.order:
            raise TensorError(f"expected {self.order} free coordinates")
        full = [0] * self.base.order
        for p, v in zip(self.fixed_positions, self.fixed_values):
            full[p - 1] = v
        for p, v in zip(self.free_positions, free_index):
            full[p - 1] = v
        return float(self.base.values[tuple(full)])

    def to_dense(self) -> DenseTensor:
        if self.order == 0:
            raise TensorError("fully restricted tensor is a scalar")
        return DenseTensor(self.values)


def restrict(A: DenseTensor, positions: Sequence[int], values: Sequence[int]) -> RestrictedTensor:
    """Fix coordinates ``values`` (0-based) at ``positions`` (1-based)."""
    positions, values = tuple(positions), tuple(int(v) for v in values)
    if len(positions) != len(values) or len(set(positions)) != len(positions):
        raise TensorError("need distinct positions with one coordinate each")
    _check_positions(positions, A.order)
    if any(not 0 <= v < A.dim for v in values):
        raise TensorError("coordinate out of range")
    order = sorted(range(len(positions)), key=lambda k: positions[k])
    return RestrictedTensor(
        A, tuple(positions[k] for k in order), tuple(values[k] for k in order)
    )


def ones_minus_identity(n: int) -> DenseTensor:
    """The matrix with zero diagonal and ones elsewhere."""
    return DenseTensor(np.ones((n, n)) - np.eye(n))


def random_symmetric(order: int, dim: int, rng: np.random.Generator, vanishing_diagonal=True) -> DenseTensor:
    """Symmetrized standard Gaussian tensor, optionally with zero generalized diagonals."""
    A = symmetrize(DenseTensor(rng.standard_normal((dim,) * order))).values
    if vanishing_diagonal:
        A = np.where(distinct_coordinates_mask(order, dim), A, 0.0)
    return DenseTensor(A)

