import itertools
import math

import numpy as np
import pytest

from polyconc.partition_norms import (
    all_partition_norms,
    decomposition_bruteforce,
    decomposition_norm,
    multilinear_value,
    norm_alternating,
    norm_bruteforce,
    norm_closed_form,
    partition_norm,
)
from polyconc.tensors import (
    DenseTensor,
    SetPartition,
    TensorError,
    blockify,
    enumerate_partitions,
    ones_minus_identity,
    random_symmetric,
    refines,
)

P = SetPartition.parse


def test_vector_closed_forms():
    a = DenseTensor([3.0, 4.0])
    assert norm_closed_form(a, P("{1}"), 1) == pytest.approx(5.0)
    assert norm_closed_form(a, P("{1}|{2}"), 2) == pytest.approx(4.0)


def test_identity_closed_forms():
    A = DenseTensor(np.eye(3))
    assert norm_closed_form(A, P("{1,2}"), 1) == pytest.approx(math.sqrt(3))
    assert norm_closed_form(A, P("{1}|{2}"), 1) == pytest.approx(1.0)


def test_ones_minus_identity_closed_forms():
    A = ones_minus_identity(5)
    q = 2
    assert norm_closed_form(A, P("{1,2,3,4}"), q) == pytest.approx(math.sqrt(20))
    assert norm_closed_form(A, P("{1,2}|{3,4}"), q) == pytest.approx(4.0)
    assert norm_closed_form(A, P("{1,2,3}|{4}"), q) == pytest.approx(2.0)
    assert norm_closed_form(A, P("{1}|{2}|{3}|{4}"), q) == pytest.approx(1.0)
    # independent oracle: eigenvalues of ee^T - Id are n-1 and -1
    assert np.max(np.abs(np.linalg.eigvalsh(A.values))) == pytest.approx(4.0)


def test_closed_forms_against_numpy(rng):
    M = rng.standard_normal((5, 5))
    A = DenseTensor(M)
    assert norm_closed_form(A, P("{1}|{2}"), 1) == pytest.approx(np.linalg.svd(M, compute_uv=False)[0])
    # one-merge of a 2-block q-structure: [{1,2},{1}] is the maximal row norm
    assert norm_closed_form(A, P("{1,2,3}|{4}"), 2) == pytest.approx(np.max(np.linalg.norm(M, axis=0)))
    assert norm_closed_form(A, P("{1,3,4}|{2}"), 2) == pytest.approx(np.max(np.linalg.norm(M, axis=1)))
    T = DenseTensor(rng.standard_normal((3, 3, 3)))
    unfold = T.values.reshape(3, 9)
    assert norm_closed_form(T, P("{1}|{2,3}"), 1) == pytest.approx(np.linalg.svd(unfold, compute_uv=False)[0])


def test_uncatalogued_shape_returns_none(rng):
    T = DenseTensor(rng.standard_normal((3, 3, 3)))
    assert norm_closed_form(T, P("{1}|{2}|{3}"), 1) is None


def test_rank_one_matrix():
    u = np.array([3.0, 4.0]) / 5
    v = np.array([1.0, 1.0]) / math.sqrt(2)
    A = DenseTensor(np.outer(u, v))
    res = norm_alternating(A, P("{1}|{2}"), 1)
    assert res.value == pytest.approx(1.0, abs=1e-10)
    x, y = res.certificate
    assert abs(abs(x @ u) - 1) < 1e-8 and abs(abs(y @ v) - 1) < 1e-8


def test_diagonal_matrix():
    assert norm_alternating(DenseTensor(np.diag([3.0, 1.0])), P("{1}|{2}"), 1).value == pytest.approx(3.0)


def test_certificate_reproduces_value(rng):
    T = random_symmetric(3, 4, rng)
    for J in enumerate_partitions(3):
        res = norm_alternating(T, J, 1)
        dec = res.decomposition
        assert multilinear_value(T, dec.parts, res.certificate) == pytest.approx(res.value, abs=1e-9)
        for block in res.certificate:
            assert np.linalg.norm(block) == pytest.approx(1.0)


def test_alternating_ascent_is_monotone(rng):
    T = DenseTensor(rng.standard_normal((4, 4, 4)))
    res = norm_alternating(T, P("{1}|{2}|{3}"), 1, restarts=5, trace=True)
    trace = np.abs(np.array(res.trace))
    assert trace.shape[0] >= 3
    assert np.all(np.diff(trace, axis=0) >= -1e-12)


def test_zero_tensor():
    Z = DenseTensor(np.zeros((3, 3)))
    res = norm_alternating(Z, P("{1}|{2}"), 1)
    assert res.value == 0.0 and res.certificate is None
    for J, r in all_partition_norms(Z, 2).items():
        assert r.value == 0.0


def test_bruteforce_examples():
    assert norm_bruteforce(DenseTensor(np.eye(2)), P("{1}|{2}"), 1) == pytest.approx(1.0, abs=1e-3)
    assert norm_bruteforce(DenseTensor([1.0, 1.0]), P("{1}|{2}"), 2) == pytest.approx(1.0, abs=1e-12)


def test_bruteforce_agrees_with_alternating(rng):
    for _ in range(3):
        A = DenseTensor(rng.standard_normal((2, 2)))
        for J in enumerate_partitions(4):
            assert norm_bruteforce(A, J, 2, grid_points=2000) == pytest.approx(
                norm_alternating(A, J, 2).value, abs=1e-3
            )


def test_bruteforce_order_three(rng):
    T = DenseTensor(rng.standard_normal((2, 2, 2)))
    for parts in [((1,), (2,), (3,)), ((1, 2), (2, 3)), ((1,), (2, 3)), ((1, 2), (1,), (3,))]:
        brute = decomposition_bruteforce(T.values, parts, grid_points=400)
        assert brute == pytest.approx(decomposition_norm(T.values, parts), abs=1e-3)


def test_all_partition_norms_vector():
    a = DenseTensor(np.array([1.0, 1.0]) / math.sqrt(2))
    norms = all_partition_norms(a, 2)
    assert norms[P("{1,2}")].value == pytest.approx(1.0)
    assert norms[P("{1}|{2}")].value == pytest.approx(1 / math.sqrt(2))


def test_all_partition_norms_identity():
    norms = all_partition_norms(DenseTensor(np.eye(2)), 1)
    assert len(norms) == 2
    assert norms[P("{1,2}")].value == pytest.approx(math.sqrt(2))
    assert norms[P("{1}|{2}")].value == pytest.approx(1.0)


def test_all_partition_norms_ones_minus_identity():
    norms = all_partition_norms(ones_minus_identity(4), 2)
    assert len(norms) == 15
    values = {round(r.value, 9) for r in norms.values()}
    assert values == {round(v, 9) for v in (math.sqrt(12), 3.0, math.sqrt(3), 1.0)}


def test_all_partition_norms_monotone_and_consistent(rng):
    T = random_symmetric(3, 4, rng)
    norms = all_partition_norms(T, 2)
    parts = list(norms)
    assert len(parts) == 203
    for I, J in itertools.product(parts, repeat=2):
        if refines(I, J):
            assert norms[I].value <= norms[J].value + 1e-6
        if blockify(I, 2, 3) == blockify(J, 2, 3):
            assert norms[I].value == pytest.approx(norms[J].value, abs=1e-9)


def test_homogeneity(rng):
    T = DenseTensor(rng.standard_normal((3, 3, 3)))
    J = P("{1}|{2}|{3}")
    assert partition_norm(T * -2.5, J, 1).value == pytest.approx(2.5 * partition_norm(T, J, 1).value, rel=1e-8)


def test_ground_size_limit(rng):
    with pytest.raises(TensorError):
        all_partition_norms(random_symmetric(3, 3, rng), 3)
