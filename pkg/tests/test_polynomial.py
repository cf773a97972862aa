import math

import numpy as np
import pytest

from polyconc.distributions import gaussian, poisson
from polyconc.polynomial import (
    MomentModel,
    Polynomial,
    PolynomialError,
    chaos_eval,
    expected_derivative_tensors,
    hoeffding_quadratic,
    mean_field_ratio,
)
from polyconc.tensors import DenseTensor, DiagonalNotVanishingError, ones_minus_identity, random_symmetric


def moments(n, mean=0.0, var=1.0, order=3):
    """Gaussian-like raw moments with the given mean and variance."""
    return MomentModel.from_distributions([gaussian(math.sqrt(var), mean)] * n, order)


def test_polynomial_basics():
    f = Polynomial(2, {(1, 1): 2.0, (2, 0): -1.0, (0, 0): 0.0})
    assert f.degree == 2
    assert len(f.terms) == 2
    assert f([1.0, 3.0]) == pytest.approx(5.0)
    assert f(np.array([[1.0, 3.0], [0.0, 1.0]])) == pytest.approx([5.0, 0.0])
    with pytest.raises(PolynomialError):
        Polynomial(2, {(1,): 1.0})
    with pytest.raises(PolynomialError):
        Polynomial(2, {(1, -1): 1.0})


def test_polynomial_text_round_trip():
    f = Polynomial(3, {(1, 0, 2): 0.1, (0, 1, 0): -3.25})
    assert Polynomial.parse(f.format()) == f
    g = Polynomial.parse("# comment\n2 1 1\n\n1 1 1\n")
    assert g.terms == {(1, 1): 3.0}
    for bad in ("", "1 1\n2 1 1", "x 1 2"):
        with pytest.raises(PolynomialError):
            Polynomial.parse(bad)


def test_from_chaos():
    A = ones_minus_identity(3)
    f = Polynomial.from_chaos(A)
    x = np.array([1.0, 2.0, -1.0])
    assert f(x) == pytest.approx(x @ A.values @ x)


def test_derivatives_product():
    f = Polynomial(2, {(1, 1): 1.0})
    d1, d2 = expected_derivative_tensors(f, moments(2, order=2))
    assert np.allclose(d2.values, [[0, 1], [1, 0]])
    assert np.allclose(d1.values, [0, 0])


def test_derivatives_square():
    f = Polynomial(1, {(2,): 1.0})
    d1, d2 = expected_derivative_tensors(f, moments(1, mean=1.5, order=2))
    assert np.allclose(d2.values, [[2.0]])
    assert np.allclose(d1.values, [3.0])


def test_derivatives_off_diagonal_sum():
    f = Polynomial.from_chaos(ones_minus_identity(3))
    d1, d2 = expected_derivative_tensors(f, moments(3, mean=1.0, order=2))
    assert np.allclose(d1.values, [4.0, 4.0, 4.0])
    assert np.allclose(d2.values, 2 * ones_minus_identity(3).values)


def test_derivatives_against_finite_differences(rng):
    # deterministic "moments" (a point mass) make E f^(d) the plain derivative at that point
    f = Polynomial(2, {(3, 0): 1.0, (1, 2): -2.0, (0, 1): 0.5})
    x0 = np.array([0.7, -1.3])
    raw = np.array([[x**k for k in range(4)] for x in x0])
    d1, d2, d3 = expected_derivative_tensors(f, MomentModel(raw))
    h = 1e-5
    grad = [(f(x0 + h * e) - f(x0 - h * e)) / (2 * h) for e in np.eye(2)]
    assert np.allclose(d1.values, grad, atol=1e-6)
    hess = [[(f(x0 + h * a + h * b) - f(x0 + h * a - h * b) - f(x0 - h * a + h * b) + f(x0 - h * a - h * b)) / (4 * h * h)
             for b in np.eye(2)] for a in np.eye(2)]
    assert np.allclose(d2.values, hess, atol=1e-4)
    assert d3.values[0, 0, 0] == pytest.approx(6.0)
    assert d3.values[0, 1, 1] == pytest.approx(-4.0)


def test_top_derivative_is_factorial_times_chaos(rng):
    A = random_symmetric(3, 4, rng)
    f = Polynomial.from_chaos(A)
    tensors = expected_derivative_tensors(f, moments(4, mean=0.3, order=3))
    assert np.allclose(tensors[-1].values, 6 * A.values)
    assert all(T.is_symmetric for T in tensors)


def test_missing_moments():
    f = Polynomial(1, {(3,): 1.0})
    with pytest.raises(PolynomialError):
        expected_derivative_tensors(f, moments(1, order=2))


def test_moment_model_validation():
    with pytest.raises(PolynomialError):
        MomentModel(np.array([[2.0, 0.0, 1.0]]))
    with pytest.raises(PolynomialError):
        MomentModel(np.array([[1.0, 2.0, 1.0]]))
    m = MomentModel.iid(poisson(2.0), 3, 2)
    assert np.allclose(m.means, 2.0) and np.allclose(m.variances, 2.0)


def test_chaos_eval_examples():
    A = DenseTensor([[0.0, 1.0], [1.0, 0.0]])
    assert chaos_eval(A, [1.0, 2.0], [0.0, 0.0]) == pytest.approx(4.0)
    assert chaos_eval(A, [0.3, 0.4], [0.3, 0.4]) == 0.0
    assert chaos_eval(DenseTensor([1.0, -1.0]), [3.0, 5.0], [1.0, 1.0]) == pytest.approx(-2.0)
    with pytest.raises(PolynomialError):
        chaos_eval(A, [1.0, 2.0, 3.0], [0.0, 0.0])


def test_chaos_eval_batched(rng):
    A = random_symmetric(3, 3, rng)
    x = rng.standard_normal((5, 3))
    m = rng.standard_normal(3)
    batch = chaos_eval(A, x, m)
    single = [np.einsum("ijk,i,j,k->", A.values, *(3 * [r - m])) for r in x]
    assert np.allclose(batch, single)


def test_hoeffding_example():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    h = hoeffding_quadratic(A, [1.0, 1.0], [1.0, 1.0])
    assert np.allclose(h.linear, [1.0, 1.0])
    assert h.constant == pytest.approx(2.0)
    x = np.array([[2.0, 5.0]])
    chaos, lin, const = h.parts(x)
    assert h.quadratic(x)[0] == pytest.approx(chaos[0] + 2 * lin[0] + const)
    h0 = hoeffding_quadratic(A, [0.0, 0.0], [1.0, 1.0])
    assert not np.any(h0.linear) and h0.constant == 0.0


def test_hoeffding_rejects_diagonal():
    with pytest.raises(DiagonalNotVanishingError):
        hoeffding_quadratic(np.eye(2), [0, 0], [1, 1])


def test_mean_field_ratio():
    A = ones_minus_identity(5)
    assert mean_field_ratio(A, np.ones(5), np.ones(5)) == pytest.approx(4.0)
    assert mean_field_ratio(A, np.zeros(5), np.ones(5)) == 0.0
    m, v = np.linspace(0.1, 1, 5), np.linspace(1, 2, 5)
    assert mean_field_ratio(A * 3.7, m, v) == pytest.approx(mean_field_ratio(A, m, v))
    with pytest.raises(PolynomialError):
        mean_field_ratio(np.zeros((3, 3)), np.ones(3), np.ones(3))
