import warnings

import numpy as np
import pytest

from noisespec.attenuation import (
    CHI_CLAMP,
    OverflowGuardError,
    PackedResponse,
    QuadratureConfig,
    _segment_response,
    attenuation,
    chi_cpmg_analytic,
    chi_cpmg_unstabilized,
    chi_fid_closed,
    chi_quadrature,
    chi_segments,
    coherence,
    coherence_from_chi,
    phi1,
    phi2,
    response,
    switching_moments,
)
from noisespec.quadrature import ToleranceError
from noisespec.spectra import LorentzianTerm, SpectrumModel, model_from_terms

from conftest import random_term

PULSES = [1, 2, 3, 4, 5, 6, 7, 8, 16, 32]


def fid_reference(B, wc, t):
    return (B / wc) * (wc * t - 1 + np.exp(-wc * t))


def test_phi_functions_continuous_at_series_switch():
    y = np.array([0.999999, 1.000001, 0.999999j, 1.000001j])
    np.testing.assert_allclose(phi1(y[::2]), phi1(y[1::2]), rtol=1e-5)
    np.testing.assert_allclose(phi2(y[::2]), phi2(y[1::2]), rtol=1e-5)
    assert phi1(0) == pytest.approx(1.0)
    assert phi2(0) == pytest.approx(0.5)


def test_chi_zero_at_t0():
    term = LorentzianTerm(2.0, 3.0, 0.4)
    for n in PULSES:
        assert chi_cpmg_analytic(term, n, 0.0) == 0.0


def test_chi_linear_in_B(rng):
    for _ in range(10):
        t = random_term(rng)
        n = int(rng.choice(PULSES))
        tt = rng.uniform(0.1, 10)
        double = LorentzianTerm(2 * t.B, t.d, t.omega_c)
        assert chi_cpmg_analytic(double, n, tt) == pytest.approx(2 * chi_cpmg_analytic(t, n, tt), rel=1e-13)


def test_spec_example_matches_quadrature():
    term = LorentzianTerm(1.0, 0.7, 0.9)
    ref = chi_quadrature(SpectrumModel((term,)), 2, 3.1)
    assert abs(chi_cpmg_analytic(term, 2, 3.1) - ref) <= 1e-8


def test_oracle_equivalence_sample(rng):
    # the full 100-term sweep lives in the acceptance suite
    for _ in range(12):
        term = random_term(rng)
        model = SpectrumModel((term,))
        n = int(rng.choice(PULSES))
        t = rng.uniform(1e-3, 10)
        analytic = float(chi_cpmg_analytic(term, n, t))
        quad = chi_quadrature(model, n, t)
        assert abs(analytic - quad) <= max(1e-8, 1e-6 * abs(quad))


@pytest.mark.parametrize("t", [1.0, 10.0])
def test_fid_examples(t):
    model = model_from_terms([(1, 0, 1)])
    expected = {1.0: np.exp(-1), 10.0: 9 + np.exp(-10)}[t]
    assert chi_quadrature(model, 0, t) == pytest.approx(expected, abs=1e-9)
    assert float(chi_fid_closed(model.terms[0], t)) == pytest.approx(expected, rel=1e-14)
    assert coherence(model, 0, [t])[0] == pytest.approx(np.exp(-expected), rel=1e-12)


def test_fid_closed_matches_brute_force_double_integral():
    # 2-D trapezoid of the correlation kernel B wc exp(-wc |t1 - t2|)
    B, wc, t = 1.0, 1.0, 1.0
    x = np.linspace(0, t, 1501)
    K = B * wc * np.exp(-wc * np.abs(x[:, None] - x[None, :]))
    brute = 0.5 * np.trapezoid(np.trapezoid(K, x, axis=1), x)
    assert brute == pytest.approx(fid_reference(B, wc, t), rel=1e-6)


def test_zero_spectrum():
    assert chi_quadrature(lambda w: np.zeros_like(w), 3, 2.0) == 0.0
    np.testing.assert_array_equal(coherence(SpectrumModel(), 4, [0.0, 1.0, 5.0]), 1.0)


def test_coherence_at_t0_is_one(rng):
    for n in [0, 1, 5]:
        m = SpectrumModel((random_term(rng), random_term(rng)))
        assert coherence(m, n, [0.0, 1.0])[0] == 1.0


def test_realness_of_unstabilized_sum(rng):
    for _ in range(40):
        term = random_term(rng, d=(0.0, 10.0), wc=(0.1, 2.0))
        n = int(rng.choice(PULSES))
        t = rng.uniform(0.1, 4.0)
        z = chi_cpmg_unstabilized(term, n, t)
        assert abs(z.imag) <= 1e-10 * abs(z.real)
        assert z.real == pytest.approx(float(chi_cpmg_analytic(term, n, t)), rel=1e-8, abs=1e-12)


def test_fid_monotone_for_centred_terms(rng):
    for _ in range(20):
        m = SpectrumModel((random_term(rng, d=(0.0, 0.0)), random_term(rng, d=(0.0, 0.0))))
        chi = attenuation(m, 0, np.sort(rng.uniform(0, 20, 200)))
        assert np.all(np.diff(chi) >= -1e-12)


def test_fid_not_monotone_for_narrow_shifted_peak():
    # dchi/dt = int S sin(wt)/w dw turns negative when the weight sits at |w| >> 0
    m = model_from_terms([(1.0, 10.0, 0.1)])
    chi = attenuation(m, 0, np.linspace(0, 2, 400))
    assert np.min(np.diff(chi)) < 0


@pytest.mark.parametrize("n", [1, 2, 7, 16])
def test_long_time_slope(n, rng):
    for _ in range(5):
        term = random_term(rng, wc=(0.5, 5.0))
        t = max(40.0 / term.omega_c, 4.0 * n)
        h = 1e-3 * t
        slope = (chi_cpmg_analytic(term, n, t + h) - chi_cpmg_analytic(term, n, t - h)) / (2 * h)
        secular = term.B * term.omega_c**2 / (term.omega_c**2 + term.d**2)
        assert slope == pytest.approx(secular, rel=0.05)


def test_basis_linearity(rng):
    terms = [random_term(rng) for _ in range(4)]
    times = np.linspace(0, 10, 50)
    for n in [0, 1, 6]:
        joint = attenuation(SpectrumModel(tuple(terms)), n, times)
        parts = sum(attenuation(SpectrumModel((t,)), n, times) for t in terms)
        np.testing.assert_allclose(joint, parts, rtol=1e-13, atol=1e-15)


def test_stable_for_large_t_omega_c():
    term = LorentzianTerm(1.0, 3.0, 10.0)
    for n in [1, 2, 3, 32]:
        for t in [5.0, 50.0, 500.0]:
            val = float(chi_cpmg_analytic(term, n, t))
            assert np.isfinite(val) and val > 0
            assert val == pytest.approx(float(chi_segments(term, n, t)), rel=1e-9)


def test_closed_form_agrees_with_segment_sum_everywhere(rng):
    a = rng.uniform(1e-6, 10, 400) + 1j * rng.uniform(0, 20, 400)
    t = rng.uniform(1e-4, 20, 400)
    for n in [1, 2, 3, 8, 33]:
        T, dT = response(a, t, n, derivative=True)
        S, dS = _segment_response(a, t, n, derivative=True)
        scale = t**2
        assert np.max(np.abs(T - S) / scale) < 1e-9
        assert np.max(np.abs(dT - dS) / scale / t) < 1e-9


@pytest.mark.parametrize("n", [0, 1, 2, 5, 32])
def test_response_derivative_matches_finite_difference(n, rng):
    a = rng.uniform(0.1, 5, 30) + 1j * rng.uniform(0, 10, 30)
    t = rng.uniform(0.1, 8, 30)
    _, dT = response(a, t, n, derivative=True)
    h = 1e-6
    fd = (response(a + h, t, n) - response(a - h, t, n)) / (2 * h)
    np.testing.assert_allclose(dT, fd, rtol=1e-6, atol=1e-9 * np.max(np.abs(dT)))


def test_switching_moments_fid_and_series():
    np.testing.assert_allclose(switching_moments(0)[:3], [1 / 2, 1 / 6, 1 / 12])
    # CPMG has zero net switching area
    for n in [1, 2, 9]:
        assert switching_moments(n)[0] == 0.0


def test_packed_response_matches_per_sequence():
    times = np.concatenate([np.linspace(0, 8, 40)] * 3)
    ns = np.repeat([1, 4, 32], 40)
    packed = PackedResponse(times, ns)
    a = np.array([0.5 + 0j, 2 + 7j, 1e-6 + 3j])
    T, dT = packed(a, derivative=True)
    for k, n in enumerate([1, 4, 32]):
        sl = slice(40 * k, 40 * (k + 1))
        R, dR = response(a[:, None], times[None, sl], n, derivative=True)
        np.testing.assert_allclose(T[:, sl], R, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(dT[:, sl], dR, rtol=1e-12, atol=1e-14)


def test_overflow_guard_raised_on_nonfinite():
    with pytest.raises(OverflowGuardError):
        response(np.array([np.nan + 0j]), np.array([1.0]), 2)


def test_clamp_reports_zero_with_flag():
    C, flags = coherence_from_chi(np.array([1.0, CHI_CLAMP + 5]), return_flags=True)
    assert C[1] == 0.0 and flags.tolist() == [False, True]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        coherence_from_chi(np.array([CHI_CLAMP * 2]))
    assert caught


def test_coherence_in_unit_interval(rng):
    m = SpectrumModel(tuple(random_term(rng) for _ in range(3)))
    for n in [0, 1, 8]:
        C = coherence(m, n, np.linspace(0, 3, 30))
        assert np.all((C > 0) & (C <= 1))


def test_fid_quadrature_path():
    m = model_from_terms([(1, 0.5, 1), (0.3, 4, 0.2)])
    times = np.linspace(0.5, 5, 6)
    np.testing.assert_allclose(
        attenuation(m, 0, times, fid_method="quadrature"), attenuation(m, 0, times), atol=1e-9
    )
    with pytest.raises(ValueError):
        attenuation(m, 0, times, fid_method="series")


def test_time_validation():
    m = model_from_terms([(1, 0, 1)])
    with pytest.raises(ValueError):
        attenuation(m, 1, [1.0, 0.5])
    with pytest.raises(ValueError):
        attenuation(m, 1, [-1.0])
    with pytest.raises(ValueError):
        chi_cpmg_analytic(m.terms[0], 0, 1.0)


def test_quadrature_tolerance_error():
    cfg = QuadratureConfig(max_subdivisions=10)
    with pytest.raises(ToleranceError) as info:
        chi_quadrature(model_from_terms([(1, 3, 0.05)]), 8, 9.0, cfg)
    assert info.value.error > 0


def test_quadrature_with_explicit_omega_max():
    m = model_from_terms([(1, 2, 1)])
    ref = chi_quadrature(m, 2, 3.0)
    val, err = chi_quadrature(m, 2, 3.0, QuadratureConfig(omega_max=400.0), full_output=True)
    assert abs(val - ref) < 1e-8
    assert err < 1e-8
