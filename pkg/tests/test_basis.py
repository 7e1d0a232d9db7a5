import numpy as np
import pytest
from numpy.polynomial import legendre as npleg

from funcnet.basis import BasisSpec, evaluate_basis, legendre_matrix, uniform_grid


def test_fourier_single_function_is_constant():
    for m in (1, 2, 17):
        np.testing.assert_array_equal(evaluate_basis(BasisSpec("fourier", 1), m), np.ones((m, 1)))


def test_legendre_three_point_closed_form():
    b = evaluate_basis(BasisSpec("legendre", 3), 3)  # t = 0, 0.5, 1 -> x = -1, 0, 1
    np.testing.assert_allclose(b, [[1, -1, 1], [1, 0, -0.5], [1, 1, 1]], atol=1e-15)


def test_fourier_gram_nearly_orthogonal():
    b = evaluate_basis(BasisSpec("fourier", 9), 128)
    gram = b.T @ b / 128
    off = gram - np.diag(np.diag(gram))
    assert np.abs(off).max() < 0.02


def test_fourier_column_order_and_bounds():
    t = uniform_grid(50)
    b = evaluate_basis(BasisSpec("fourier", 5), 50)
    np.testing.assert_allclose(b[:, 1], np.sin(2 * np.pi * t), atol=1e-15)
    np.testing.assert_allclose(b[:, 2], np.cos(2 * np.pi * t), atol=1e-15)
    np.testing.assert_allclose(b[:, 3], np.sin(4 * np.pi * t), atol=1e-15)
    assert np.abs(b).max() <= 1.0
    assert np.all(b[:, 0] == 1.0)


@pytest.mark.parametrize("n", range(6))
def test_legendre_recurrence_matches_direct_polynomials(n):
    x = np.linspace(-1, 1, 41)
    coef = np.zeros(n + 1)
    coef[n] = 1
    np.testing.assert_allclose(legendre_matrix(x, 6)[:, n], npleg.legval(x, coef), atol=1e-12)


def test_grid_rules():
    np.testing.assert_array_equal(uniform_grid(1), [0.5])
    np.testing.assert_allclose(uniform_grid(5), [0, 0.25, 0.5, 0.75, 1])


def test_pure_and_read_only():
    spec = BasisSpec("legendre", 6)
    a, b = evaluate_basis(spec, 24), evaluate_basis(BasisSpec("legendre", 6), 24)
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        a[0, 0] = 2.0


def test_shapes_finite():
    for kind in ("fourier", "legendre"):
        b = evaluate_basis(BasisSpec(kind, 12), 256)
        assert b.shape == (256, 12) and np.all(np.isfinite(b))


@pytest.mark.parametrize("kwargs", [dict(basis_type="fourier", n_functions=0),
                                    dict(basis_type="spline", n_functions=3),
                                    dict(basis_type="fourier", n_functions=2, domain=(1.0, 1.0))])
def test_invalid_specs(kwargs):
    with pytest.raises(ValueError):
        BasisSpec(**kwargs)


def test_grid_size_must_be_positive():
    with pytest.raises(ValueError):
        evaluate_basis(BasisSpec("fourier", 3), 0)
