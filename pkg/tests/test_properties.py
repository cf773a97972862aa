"""Property-based checks of structural invariants."""

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from polyconc.bounds import TailBound, deviation_at_confidence
from polyconc.distributions import gaussian
from polyconc.orlicz import psi_norm_exact
from polyconc.partition_norms import decomposition_norm, partition_norm
from polyconc.polynomial import Polynomial, hoeffding_quadratic
from polyconc.tensors import (
    DenseTensor,
    IndexMask,
    SetPartition,
    apply_mask,
    enumerate_partitions,
    refines,
    symmetrize,
)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@st.composite
def partitions(draw, max_size=5, size=None):
    m = size or draw(st.integers(1, max_size))
    labels = draw(st.lists(st.integers(0, m - 1), min_size=m, max_size=m))
    groups: dict[int, list[int]] = {}
    for pos, lab in enumerate(labels, start=1):
        groups.setdefault(lab, []).append(pos)
    return SetPartition.from_blocks(groups.values())


@st.composite
def tensors(draw, order=None, dim=None):
    order = order or draw(st.integers(1, 3))
    dim = dim or draw(st.integers(2, 3))
    vals = draw(arrays(float, (dim,) * order, elements=finite))
    assume(np.abs(vals).max() > 1e-3)
    return DenseTensor(vals)


@st.composite
def tail_bounds(draw):
    k = draw(st.integers(1, 4))
    terms = [
        (draw(st.floats(0.1, 10)), draw(st.floats(0.1, 2)))
        for _ in range(k)
    ]
    return TailBound.from_terms(terms, constant_C=draw(st.floats(0.1, 10)))


@given(partitions())
def test_canonical_form_is_fixed_point(P):
    shuffled = SetPartition(P.ground_size, tuple(reversed([tuple(reversed(b)) for b in P.blocks])))
    assert shuffled == P
    assert SetPartition.parse(str(P)) == P


@given(st.integers(1, 5), st.data())
def test_refinement_is_partial_order(m, data):
    P, Q, R = (data.draw(partitions(size=m)) for _ in range(3))
    assert refines(P, P)
    assert refines(SetPartition.discrete(P.ground_size), P)
    assert refines(P, SetPartition.trivial(P.ground_size))
    if refines(P, Q) and refines(Q, P):
        assert P == Q
    if refines(P, Q) and refines(Q, R):
        assert refines(P, R)


@given(partitions(max_size=4), st.data())
def test_merge_coarsens(P, data):
    assume(len(P) >= 2)
    a, b = data.draw(st.lists(st.integers(0, len(P) - 1), min_size=2, max_size=2, unique=True))
    merged = P.merge(a, b)
    assert refines(P, merged) and len(merged) == len(P) - 1


@given(tensors(order=3), st.data())
def test_mask_composition(A, data):
    pos = data.draw(st.lists(st.integers(1, 3), min_size=2, max_size=3, unique=True))
    m1 = IndexMask.generalized_diagonal(pos)
    m2 = IndexMask.generalized_row([pos[0]], [data.draw(st.integers(0, A.dim - 1))])
    both = apply_mask(A, m1 & m2).values
    assert np.allclose(both, apply_mask(apply_mask(A, m1), m2).values)
    assert np.allclose(both, apply_mask(apply_mask(A, m2), m1).values)
    assert np.allclose(apply_mask(A, m1).values + apply_mask(A, m1.complement()).values, A.values)


@given(tensors(order=3))
def test_level_sets_tile(A):
    total = sum(apply_mask(A, IndexMask.level_set(K)).values for K in enumerate_partitions(3))
    assert np.allclose(total, A.values)


@given(tensors())
def test_symmetrize_idempotent(A):
    S = symmetrize(A)
    assert S.is_symmetric
    assert np.allclose(symmetrize(S).values, S.values)


@given(tensors(order=2), partitions(max_size=2).filter(lambda P: P.ground_size == 2),
       st.floats(0.1, 5), st.booleans())
def test_norm_homogeneity(A, J, c, flip):
    c = -c if flip else c
    base = float(partition_norm(A, J, 1, seed=0))
    assert float(partition_norm(A * c, J, 1, seed=0)) == pytest.approx(abs(c) * base, rel=1e-6)


@given(tensors(order=3, dim=2))
def test_norms_monotone_under_coarsening(A):
    vals = {P: float(partition_norm(A, P, 1, seed=0)) for P in enumerate_partitions(3)}
    for P in vals:
        for Q in vals:
            if refines(P, Q):
                assert vals[P] <= vals[Q] * (1 + 1e-6) + 1e-9


@given(tensors(order=2, dim=3))
def test_hs_and_op_bracket(A):
    hs = decomposition_norm(A.values, [(1, 2)])
    op = decomposition_norm(A.values, [(1,), (2,)])
    mx = decomposition_norm(A.values, [(1, 2), (1,), (2,)])
    assert mx <= op * (1 + 1e-9) + 1e-12 and op <= hs * (1 + 1e-9) + 1e-12


@given(tail_bounds(), st.floats(0.01, 50), st.floats(0.01, 50))
def test_tail_bound_monotone(bound, t1, t2):
    lo, hi = sorted((t1, t2))
    assert bound.evaluate(hi) <= bound.evaluate(lo) + 1e-15


@given(tail_bounds(), st.floats(0.01, 20), st.floats(0.01, 20))
def test_deviation_increasing_and_inverse(bound, x1, x2):
    lo, hi = sorted((x1, x2))
    assert deviation_at_confidence(bound, lo) <= deviation_at_confidence(bound, hi)
    t = deviation_at_confidence(bound, lo)
    assert bound.exponent_value(t) == pytest.approx(lo, rel=1e-9)


@given(st.integers(2, 5), st.data())
def test_hoeffding_identity(n, data):
    upper = data.draw(arrays(float, (n, n), elements=finite))
    A = np.triu(upper, 1)
    A = A + A.T
    mu = data.draw(arrays(float, n, elements=finite))
    var = data.draw(arrays(float, n, elements=st.floats(0, 3)))
    x = data.draw(arrays(float, (4, n), elements=finite))
    h = hoeffding_quadratic(A, mu, var)
    chaos, lin, const = h.parts(x)
    scale = 1.0 + np.abs(h.quadratic(x)).max()
    assert np.allclose(h.quadratic(x), chaos + 2 * lin + const, rtol=0, atol=1e-12 * scale * 100)


@given(st.integers(1, 4), st.data())
def test_polynomial_round_trip(n, data):
    exps = st.tuples(*[st.integers(0, 3)] * n)
    terms = data.draw(st.dictionaries(exps, st.floats(-100, 100).filter(lambda c: c != 0), min_size=1, max_size=6))
    f = Polynomial(n, terms)
    assert Polynomial.parse(f.format()) == f


@settings(max_examples=8)
@given(st.floats(0.2, 5), st.sampled_from([2.0, 1.0, 0.5]))
def test_psi_norm_scales(c, alpha):
    a = psi_norm_exact(gaussian(1.0, alpha=alpha)).value
    assert psi_norm_exact(gaussian(c, alpha=alpha)).value == pytest.approx(c * a, rel=1e-9)

