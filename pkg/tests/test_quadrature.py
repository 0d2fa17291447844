import numpy as np
import pytest

from noisespec.quadrature import NODES, W_GAUSS, W_KRONROD, ToleranceError, integrate


def test_rule_weights():
    assert W_KRONROD.sum() == pytest.approx(2.0)
    assert W_GAUSS.sum() == pytest.approx(2.0)
    # the Gauss subset integrates degree 13 exactly
    assert np.sum(W_GAUSS * NODES**12) == pytest.approx(2 / 13)
    assert np.sum(W_KRONROD * NODES**22) == pytest.approx(2 / 23)


def test_smooth_integrals():
    val, err = integrate(np.exp, [0, 1, 2])
    assert val == pytest.approx(np.e**2 - 1, rel=1e-13)
    assert err < 1e-10
    val, _ = integrate(lambda x: np.sin(50 * x) ** 2, np.linspace(0, np.pi, 5))
    assert val == pytest.approx(np.pi / 2, rel=1e-11)


def test_vector_integrand():
    k = np.array([1.0, 2.0, 3.0])
    val, _ = integrate(lambda x: x[:, None] ** k, [0, 1])
    np.testing.assert_allclose(val, 1 / (k + 1), rtol=1e-13)


def test_singular_integrand_refines():
    val, _ = integrate(lambda x: 1 / np.sqrt(x), [0, 1], abs_tol=1e-9, rel_tol=1e-9)
    assert val == pytest.approx(2.0, abs=1e-7)


def test_zero_width():
    val, err = integrate(np.exp, [1.0, 1.0])
    assert val == 0 and err == 0


def test_tolerance_error_carries_estimate():
    with pytest.raises(ToleranceError) as info:
        integrate(lambda x: np.sin(1 / x) / x, [1e-9, 1], abs_tol=1e-14, rel_tol=1e-14, max_panels=50)
    assert info.value.error is not None
    assert info.value.value is not None
