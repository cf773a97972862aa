import itertools

import numpy as np
import pytest

from polyconc.tensors import (
    Decomposition,
    DenseTensor,
    DiagonalNotVanishingError,
    IndexMask,
    NotSymmetricError,
    SetPartition,
    TensorError,
    apply_mask,
    bell_number,
    blockify,
    enumerate_partitions,
    format_tensor,
    ones_minus_identity,
    parse_tensor,
    random_symmetric,
    read_tensor,
    refines,
    restrict,
    symmetrize,
    write_tensor,
)


def partitions_by_labelling(m):
    """Independent oracle: canonical forms of all labelings of 1..m."""
    seen = set()
    for labels in itertools.product(range(m), repeat=m):
        blocks = {}
        for x, lab in enumerate(labels, start=1):
            blocks.setdefault(lab, []).append(x)
        seen.add(tuple(sorted(tuple(b) for b in blocks.values())))
    return seen


@pytest.mark.parametrize("m, count", [(1, 1), (2, 2), (3, 5), (4, 15), (5, 52), (6, 203)])
def test_partition_counts(m, count):
    parts = enumerate_partitions(m)
    assert len(parts) == count == bell_number(m)
    assert len(set(parts)) == count


@pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
def test_enumeration_matches_labelling_oracle(m):
    got = {P.blocks for P in enumerate_partitions(m)}
    assert got == partitions_by_labelling(m)


def test_bell_numbers_larger():
    assert [bell_number(m) for m in range(7, 11)] == [877, 4140, 21147, 115975]
    with pytest.raises(TensorError):
        enumerate_partitions(0)
    with pytest.raises(TensorError):
        enumerate_partitions(11)


def test_partition_canonical_form_and_parse():
    P = SetPartition.from_blocks([[4, 2], [3, 1]])
    assert P.blocks == ((1, 3), (2, 4))
    assert str(P) == "{1,3}|{2,4}"
    assert SetPartition.parse(str(P)) == P
    assert SetPartition.parse("{3}|{1,2}") == SetPartition.from_blocks([[1, 2], [3]])
    with pytest.raises(TensorError):
        SetPartition.from_blocks([[1, 2], [2, 3]])
    with pytest.raises(TensorError):
        SetPartition.from_blocks([[1], [3]])
    with pytest.raises(TensorError):
        SetPartition.parse("{1,a}")


def test_refines_examples():
    assert refines(SetPartition.parse("{1}|{2}|{3}"), SetPartition.parse("{1,2}|{3}"))
    assert not refines(SetPartition.parse("{1,2}|{3}"), SetPartition.parse("{1,3}|{2}"))
    for P in enumerate_partitions(6):
        assert refines(P, P)


def test_refines_is_partial_order():
    parts = enumerate_partitions(4)
    for P, Q in itertools.product(parts, repeat=2):
        if refines(P, Q) and refines(Q, P):
            assert P == Q
        for R in parts:
            if refines(P, Q) and refines(Q, R):
                assert refines(P, R)
    for P in enumerate_partitions(5):
        assert refines(SetPartition.discrete(5), P)
        assert refines(P, SetPartition.trivial(5))


def test_merge():
    P = SetPartition.discrete(3).merge(0, 1)
    assert P == SetPartition.parse("{1,2}|{3}")


def test_blockify_examples():
    J = SetPartition.parse("{1,3}|{2}|{4}")
    assert blockify(J, 1, 4).parts == tuple(sorted(J.blocks))
    assert blockify(J, 2, 2) == Decomposition(2, ((1, 2), (1,), (2,)))
    assert blockify(SetPartition.parse("{1,2}|{3,4}"), 2, 2) == Decomposition(2, ((1,), (2,)))
    with pytest.raises(TensorError):
        blockify(J, 3, 2)


def test_decomposition_keeps_multiplicity():
    dec = Decomposition(2, ((1,), (1,), (2,)))
    assert dec.count((1,)) == 2
    assert len(dec) == 3
    with pytest.raises(TensorError):
        Decomposition(3, ((1,), (2,)))


def test_dense_tensor_basics():
    A = DenseTensor([[1.0, 2.0], [2.0, -3.0]])
    assert A.order == 2 and A.dim == 2
    assert A.is_symmetric
    assert not A.has_vanishing_diagonal
    assert A.hs_norm() == pytest.approx(np.sqrt(18))
    assert A.max_abs() == 3.0
    assert (A * 2).values[1, 1] == -6.0
    with pytest.raises(ValueError):
        A.values[0, 0] = 5
    with pytest.raises(TensorError):
        DenseTensor(np.zeros((2, 3)))
    with pytest.raises(TensorError):
        DenseTensor([np.nan])
    with pytest.raises(TensorError):
        DenseTensor.from_flat(2, 2, [1, 2, 3])
    with pytest.raises(TensorError):
        DenseTensor.from_flat(8, 10, [0.0])


def test_chaos_readiness_errors():
    with pytest.raises(NotSymmetricError):
        DenseTensor([[0.0, 1.0], [2.0, 0.0]]).require_chaos_ready()
    with pytest.raises(DiagonalNotVanishingError):
        DenseTensor(np.eye(2)).require_chaos_ready()
    ones_minus_identity(4).require_chaos_ready()


def test_symmetric_flag_exhaustive(rng):
    for order in (2, 3):
        A = random_symmetric(order, 4, rng, vanishing_diagonal=False)
        for perm in itertools.permutations(range(order)):
            assert np.allclose(A.values, np.transpose(A.values, perm))
    B = random_symmetric(3, 4, rng)
    assert B.has_vanishing_diagonal


def test_symmetrize_is_idempotent_projection(rng):
    A = DenseTensor(rng.standard_normal((3, 3, 3)))
    S = symmetrize(A)
    assert S.is_symmetric
    assert np.allclose(symmetrize(S).values, S.values)


def test_text_round_trip(tmp_path, rng):
    A = DenseTensor(rng.standard_normal((3, 3, 3)))
    assert parse_tensor(format_tensor(A)) == A
    write_tensor(A, tmp_path / "a.txt")
    assert read_tensor(tmp_path / "a.txt") == A
    with pytest.raises(TensorError):
        parse_tensor("2 2\n1 2 3")


def test_masks(rng):
    A = DenseTensor(rng.standard_normal((4, 4)))
    off = apply_mask(A, IndexMask.level_set(SetPartition.discrete(2)))
    assert np.allclose(off.values, A.values - np.diag(np.diag(A.values)))
    diag = apply_mask(A, IndexMask.generalized_diagonal([1, 2]))
    assert np.allclose(diag.values, np.diag(np.diag(A.values)))
    row = apply_mask(A, IndexMask.generalized_row([1], [2]))
    assert np.allclose(row.values[2], A.values[2]) and not np.any(np.delete(row.values, 2, axis=0))


@pytest.mark.parametrize("order", [2, 3, 4])
def test_level_sets_are_partition_of_unity(order, rng):
    A = DenseTensor(rng.standard_normal((3,) * order))
    total = sum(apply_mask(A, IndexMask.level_set(K)).values for K in enumerate_partitions(order))
    assert np.allclose(total, A.values)


def test_mask_composition(rng):
    A = DenseTensor(rng.standard_normal((3, 3, 3)))
    m1 = IndexMask.generalized_diagonal([1, 3])
    m2 = IndexMask.generalized_row([2], [1])
    both = apply_mask(A, m1 & m2)
    assert np.allclose(both.values, apply_mask(apply_mask(A, m1), m2).values)
    comp = apply_mask(A, m1.complement())
    assert np.allclose(comp.values + apply_mask(A, m1).values, A.values)
    with pytest.raises(TensorError):
        apply_mask(A, IndexMask.generalized_row([4], [0]))


def test_restrict(rng):
    A = DenseTensor(rng.standard_normal((3, 3, 3, 3)))
    R = restrict(A, [], [])
    assert np.array_equal(R.values, A.values)
    full = restrict(A, [1, 2, 3, 4], [0, 1, 2, 0])
    assert full.values == A.values[0, 1, 2, 0]
    M = restrict(A, [3, 1], [1, 0])
    assert M.free_positions == (2, 4)
    assert np.array_equal(M.values, A.values[0, :, 1, :])
    assert M[2, 1] == A.values[0, 2, 1, 1]
    assert M.to_dense().order == 2
    with pytest.raises(TensorError):
        restrict(A, [1], [5])
    with pytest.raises(TensorError):
        full.to_dense()
