import numpy as np
import pytest
from hypothesis import given, strategies as st

from noisespec.spectra import (
    OMEGA_C_FLOOR,
    LorentzianTerm,
    PulseSequence,
    SpectrumModel,
    _filter_direct,
    concat_models,
    eval_spectrum,
    filter_function,
    mean_filter_coefficient,
    model_from_terms,
)

terms = st.builds(
    LorentzianTerm,
    st.floats(0, 10),
    st.floats(0, 20),
    st.floats(1e-3, 10),
)
models = st.lists(terms, min_size=1, max_size=5).map(lambda ts: SpectrumModel(tuple(ts)))
freqs = st.floats(-100, 100)


def test_eval_spectrum_examples():
    m = model_from_terms([(1, 0, 1)])
    assert eval_spectrum(m, 0.0) == pytest.approx(2.0)
    assert eval_spectrum(m, 1.0) == pytest.approx(1.0)
    assert eval_spectrum(model_from_terms([(1, 2, 1)]), 2.0) == pytest.approx(1 + 1 / 17)


def test_empty_model_is_zero():
    assert np.all(eval_spectrum(SpectrumModel(), np.linspace(-5, 5, 11)) == 0)


@pytest.mark.parametrize("bad", [(-1, 0, 1), (1, -0.1, 1), (1, 0, 0.0), (1, 0, 1e-7)])
def test_term_invariants(bad):
    with pytest.raises(ValueError):
        LorentzianTerm(*bad)


@given(models, freqs)
def test_spectrum_even_and_nonnegative(m, w):
    a, b = eval_spectrum(m, w), eval_spectrum(m, -w)
    assert a == b
    assert a >= 0


@given(models, models, st.lists(freqs, min_size=1, max_size=8))
def test_spectrum_additive(m1, m2, ws):
    w = np.array(ws)
    joint = eval_spectrum(concat_models([m1, m2]), w)
    np.testing.assert_allclose(joint, eval_spectrum(m1, w) + eval_spectrum(m2, w), rtol=1e-14, atol=1e-300)


def test_params_roundtrip():
    theta = np.array([1.0, 2.0, 3.0, 0.5, 0.0, 0.1])
    m = SpectrumModel.from_params(theta)
    np.testing.assert_array_equal(m.params.ravel(), theta)
    assert len(m) == 2
    np.testing.assert_allclose(m.scaled(2.0)(1.3), 2 * m(1.3))


def test_sequence_names_and_parity():
    assert PulseSequence(0).name == "FID"
    assert PulseSequence(1).name == "SE"
    assert PulseSequence(8).name == "CPMG8"
    assert PulseSequence(4).is_even and not PulseSequence(3).is_even
    with pytest.raises(ValueError):
        PulseSequence(-1)
    with pytest.raises(ValueError):
        PulseSequence(1.5)


def test_switching_edges():
    np.testing.assert_allclose(PulseSequence(2).switching_edges(4.0), [0, 1, 3, 4])
    np.testing.assert_allclose(PulseSequence(0).switching_edges(2.0), [0, 2])


def test_filter_examples():
    assert filter_function(0, 1.0, np.pi) == pytest.approx(4.0)
    assert filter_function(0, 0.0, 3.0) == pytest.approx(9.0)
    assert filter_function(1, 1.0, 2 * np.pi) == pytest.approx(16.0)


@pytest.mark.parametrize("n", [0, 1, 2, 3, 8])
def test_filter_small_omega_limit(n):
    # F(w) near 0: t^2 for FID, and the leading w^2 behavior for CPMG
    t = 2.7
    w = 1e-8
    direct = float(filter_function(n, w, t))
    if n == 0:
        assert direct == pytest.approx(t**2, rel=1e-6)
    else:
        ref = _filter_direct(n, np.array([1e-3]), np.array([t]))[0] / 1e-6 * w**2
        assert direct == pytest.approx(ref, rel=1e-5)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 7, 16])
def test_filter_matches_switching_sum(n, rng):
    w = rng.uniform(0.01, 50, 200)
    t = rng.uniform(0.1, 10, 200)
    np.testing.assert_allclose(filter_function(n, w, t), _filter_direct(n, w, t), rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 5])
def test_filter_finite_at_removable_poles(n):
    t = 3.0
    poles = (2 * np.arange(4) + 1) * np.pi * n / t
    vals = filter_function(n, poles, t)
    assert np.all(np.isfinite(vals)) and np.all(vals >= 0)
    np.testing.assert_allclose(vals, _filter_direct(n, poles, t), rtol=1e-9)
    near = filter_function(n, poles * (1 + 1e-9), t)
    np.testing.assert_allclose(near, vals, rtol=1e-5)


@given(st.integers(0, 40), st.floats(-200, 200), st.floats(0, 30))
def test_filter_nonnegative(n, w, t):
    assert filter_function(n, w, t) >= 0


def test_filter_rejects_negative_time():
    with pytest.raises(ValueError):
        filter_function(1, 1.0, -1.0)


def test_mean_filter_coefficient():
    assert mean_filter_coefficient(0) == 2
    assert mean_filter_coefficient(3) == 4 * 3 + 2


def test_resolved_drops_floor_terms():
    m = model_from_terms([(3.0, 0.0, OMEGA_C_FLOOR), (1.0, 2.0, 0.5)])
    assert m(0.0) > 6.0 - 1e-9
    r = m.resolved()
    assert len(r) == 1 and r.terms[0].d == 2.0
    w = np.linspace(0.01, 5, 50)
    np.testing.assert_allclose(r(w), m(w), rtol=1e-6)
