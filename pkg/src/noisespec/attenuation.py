"""Attenuation ``chi(t)`` and coherence ``C(t) = exp(-chi(t))`` of Lorentzian spectra.

Every Lorentzian term ``{B, d, omega_c}`` has correlation function
``B omega_c exp(-omega_c |tau|) cos(d tau)``, so its attenuation can be written
as ``chi = B omega_c Re T(a, t)`` with the complex rate ``a = omega_c + i d``.
``T`` is evaluated in closed form for CPMG (the even/odd expressions regrouped
into decaying exponentials only), from a direct switching-function sum where
that closed form is ill-conditioned, and by quadrature of the filtered spectrum
as an independent check.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .quadrature import ToleranceError, integrate
from .spectra import (
    LorentzianTerm,
    PulseSequence,
    SpectrumModel,
    as_sequence,
    filter_function,
    mean_filter_coefficient,
)

CHI_CLAMP = 700.0

# closed-form CPMG switches to the segment sum below these magnitudes
_SMALL_ARG = 1e-2
_NEAR_POLE = 1e-3

_SERIES_TERMS = 30


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    omega_max: float | None = None
    max_subdivisions: int = 2_000_000
    # fine uniform panels cover [0, feature_max]
    feature_max: float = 64.0
    panel_width: float = 0.25

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.omega_max is not None and not self.omega_max > 0:
            raise ValueError("omega_max must be positive")


class OverflowGuardError(FloatingPointError):
    pass


def _series_coeffs(shift):
    k = np.arange(_SERIES_TERMS)
    from math import factorial

    return np.array([(-1.0) ** j / factorial(j + shift) for j in k])


_C1 = _series_coeffs(1)
_C2 = _series_coeffs(2)


def _poly(coeffs, y):
    out = np.zeros_like(y)
    for c in coeffs[::-1]:
        out = out * y + c
    return out


def _dpoly(coeffs, y):
    d = coeffs[1:] * np.arange(1, coeffs.size)
    return _poly(d, y)


def phi1(y):
    """``(1 - exp(-y)) / y`` with the removable point at 0."""
    y = np.asarray(y, dtype=complex)
    small = np.abs(y) < 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.expm1(-y) / y
    return np.where(small, _poly(_C1, y), out)


def phi2(y):
    """``(y - 1 + exp(-y)) / y^2`` with the removable point at 0."""
    y = np.asarray(y, dtype=complex)
    small = np.abs(y) < 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (y + np.expm1(-y)) / y**2
    return np.where(small, _poly(_C2, y), out)


def _phi_derivs(y):
    # (phi1, phi2, phi1', phi2')
    y = np.asarray(y, dtype=complex)
    small = np.abs(y) < 1.0
    p1, p2 = phi1(y), phi2(y)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        d1 = (np.exp(-y) - p1) / y
        d2 = (p1 - 2 * p2) / y
    d1 = np.where(small, _dpoly(_C1, y), d1)
    d2 = np.where(small, _dpoly(_C2, y), d2)
    return p1, p2, d1, d2


def _segment_response(a, t, n_pulses, derivative=False):
    """``T(a, t)`` from the piecewise-constant switching function."""
    frac = np.diff(PulseSequence(n_pulses).switching_edges(1.0))
    sign = 1.0
    T = np.zeros(np.broadcast(a, t).shape, dtype=complex)
    Q = np.zeros_like(T)
    dT = np.zeros_like(T)
    dQ = np.zeros_like(T)
    for f in frac:
        L = f * t
        y = a * L
        p1, p2, d1, d2 = _phi_derivs(y)
        e = np.exp(-y)
        T = T + L**2 * p2 + sign * Q * L * p1
        if derivative:
            dT = dT + L**3 * d2 + sign * (dQ * L * p1 + Q * L**2 * d1)
            dQ = -L * e * Q + e * dQ + sign * L**2 * d1
        Q = e * Q + sign * L * p1
        sign = -sign
    return (T, dT) if derivative else T


def _cpmg_closed_response(a, t, n, derivative=False):
    """Closed-form CPMG ``T(a, t)`` for an array of pulse numbers ``n >= 1``.

    ``T = t/a - 2 H(v) / a^2`` with ``v = exp(-t a / 2N)`` and
    ``H(v) = N (1 - v^2)/(1 + v^2) + (1 - (-1)^N v^(2N)) (1 - v)^4 / (2 (1 + v^2)^2)``.
    Only ``|v| < 1`` enters, so nothing grows with ``t omega_c``.
    """
    n = np.asarray(n, dtype=float)
    sigma = np.where(n % 2 == 0, 1.0, -1.0)
    x = t * a / (2 * n)
    v = np.exp(-x)
    v2 = v * v
    v2n = np.exp(-t * a)
    one_p = 1 + v2
    q = (1 - v) ** 4
    p = 1 - sigma * v2n
    r = 2 * one_p**2
    H = n * (1 - v2) / one_p + p * q / r
    T = t / a - 2 * H / a**2
    if not derivative:
        return T
    v2n_m1 = np.exp(-t * a * (2 * n - 1) / (2 * n))
    dp = -2 * n * sigma * v2n_m1
    dq = -4 * (1 - v) ** 3
    dr = 8 * v * one_p
    dH = -4 * n * v / one_p**2 + (dp * q + p * dq) / r - p * q * dr / r**2
    dv = -t / (2 * n) * v
    dT = -t / a**2 - 2 * dH * dv / a**2 + 4 * H / a**3
    return T, dT


def _closed_is_unstable(a, t, n):
    x = t * a / (2 * n)
    v2 = np.exp(-2 * x)
    return (np.abs(x) < _SMALL_ARG) | (np.abs(1 + v2) < _NEAR_POLE)


_MOMENT_TERMS = 40
# the Taylor series in y = a t is used up to this |y|
_SERIES_RADIUS = 4.0


@lru_cache(maxsize=256)
def switching_moments(n_pulses: int) -> np.ndarray:
    """Taylor coefficients ``mu_k`` of ``T(a, 1) = sum_k mu_k (-a)^k / k!``.

    ``mu_k = (1/2) int int s(u) s(v) |u - v|^k du dv`` over the unit square,
    computed exactly in rational arithmetic from the switching jumps (all jump
    times are multiples of ``1/2N``).
    """
    n = int(n_pulses)
    if n < 0:
        raise ValueError("n_pulses must be nonnegative")
    if n == 0:
        return np.array([1.0 / ((k + 1) * (k + 2)) for k in range(_MOMENT_TERMS)])
    pos = [0] + [2 * j - 1 for j in range(1, n + 1)] + [2 * n]
    s = [(-1) ** j for j in range(n + 1)]
    c = [-s[0]] + [s[j - 1] - s[j] for j in range(1, n + 1)] + [s[n]]
    amp = {}
    for i in range(len(pos)):
        for j in range(len(pos)):
            m = abs(pos[i] - pos[j])
            if m:
                amp[m] = amp.get(m, 0) + c[i] * c[j]
    out = []
    for k in range(_MOMENT_TERMS):
        total = sum(a * m ** (k + 2) for m, a in amp.items())
        out.append(float(Fraction(-total, 2 * (2 * n) ** (k + 2) * (k + 1) * (k + 2))))
    return np.array(out)


def _series_response(a, t, mu, derivative=False):
    # T = sum_k mu_k (-a)^k t^(k+2) / k!, by Horner in y = -a t
    y = -a * t
    K = mu.shape[0]
    fact = np.cumprod(np.concatenate(([1.0], np.arange(1, K))))
    coef = (mu.T / fact).T if mu.ndim > 1 else mu / fact
    acc = np.zeros(np.broadcast(y, coef[0]).shape, dtype=complex)
    for k in range(K - 1, -1, -1):
        acc = acc * y + coef[k]
    T = t**2 * acc
    if not derivative:
        return T
    dacc = np.zeros_like(acc)
    for k in range(K - 1, 0, -1):
        dacc = dacc * y + k * coef[k]
    return T, -(t**3) * dacc


def _fallback(a, t, n_pulses, derivative):
    # well-conditioned replacement for the closed form on flagged points
    small = np.abs(a * t) <= _SERIES_RADIUS
    T = np.zeros(a.shape, dtype=complex)
    dT = np.zeros_like(T)
    if np.any(small):
        out = _series_response(a[small], t[small], switching_moments(n_pulses), derivative)
        if derivative:
            T[small], dT[small] = out
        else:
            T[small] = out
    rest = ~small
    if np.any(rest):
        out = _segment_response(a[rest], t[rest], n_pulses, derivative)
        if derivative:
            T[rest], dT[rest] = out
        else:
            T[rest] = out
    return (T, dT) if derivative else T


def response(a, t, n_pulses, derivative=False):
    """Dimensionless response ``T(a, t)`` (and ``dT/da``) for one pulse sequence.

    ``a`` and ``t`` broadcast; ``chi = B omega_c Re T``.
    """
    a = np.asarray(a, dtype=complex)
    t = np.asarray(t, dtype=float)
    a, t = np.broadcast_arrays(a, t)
    if n_pulses == 0:
        p1, p2, d1, d2 = _phi_derivs(a * t)
        T = t**2 * p2
        return (T, t**3 * d2) if derivative else T
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = _cpmg_closed_response(a, t, n_pulses, derivative)
        bad = _closed_is_unstable(a, t, n_pulses)
    T, dT = out if derivative else (out, None)
    if np.any(bad):
        T = np.array(T, copy=True)
        fb = _fallback(a[bad], t[bad], n_pulses, derivative)
        if derivative:
            dT = np.array(dT, copy=True)
            T[bad], dT[bad] = fb
        else:
            T[bad] = fb
    if not np.all(np.isfinite(T)) or (derivative and not np.all(np.isfinite(dT))):
        raise OverflowGuardError("non-finite intermediate in the CPMG response")
    return (T, dT) if derivative else T


class PackedResponse:
    """Response of many CPMG points with mixed pulse numbers in one pass.

    Meant for the fitting loop, where the same ``(t, N)`` points are evaluated
    for thousands of parameter vectors.
    """

    def __init__(self, times, n_pulses):
        self.t = np.asarray(times, dtype=float)
        self.n = np.asarray(n_pulses, dtype=int)
        if self.t.shape != self.n.shape or np.any(self.n < 1):
            raise ValueError("need matching times and pulse numbers >= 1")
        self.mu = np.stack([switching_moments(int(k)) for k in self.n], axis=1)
        self.groups = {int(k): np.flatnonzero(self.n == k) for k in np.unique(self.n)}

    def __call__(self, a, derivative=False):
        a = np.asarray(a, dtype=complex).reshape(-1, 1)
        t = self.t[None, :]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out = _cpmg_closed_response(a, t, self.n[None, :], derivative)
            bad = _closed_is_unstable(a, t, self.n[None, :])
        T, dT = out if derivative else (out, None)
        if np.any(bad):
            rows, cols = np.nonzero(bad)
            aa, tt = a[rows, 0], self.t[cols]
            small = np.abs(aa * tt) <= _SERIES_RADIUS
            if np.any(small):
                fb = _series_response(aa[small], tt[small], self.mu[:, cols[small]], derivative)
                if derivative:
                    T[rows[small], cols[small]], dT[rows[small], cols[small]] = fb
                else:
                    T[rows[small], cols[small]] = fb
            for i in np.flatnonzero(~small):
                r, c = rows[i], cols[i]
                fb = _segment_response(aa[i], tt[i], int(self.n[c]), derivative)
                if derivative:
                    T[r, c], dT[r, c] = fb
                else:
                    T[r, c] = fb
        if not np.all(np.isfinite(T)) or (derivative and not np.all(np.isfinite(dT))):
            raise OverflowGuardError("non-finite intermediate in the CPMG response")
        return (T, dT) if derivative else T


def _as_term(term):
    if isinstance(term, LorentzianTerm):
        return term
    return LorentzianTerm(*map(float, term))


def chi_cpmg_analytic(term, n_pulses, t):
    """Closed-form attenuation of one Lorentzian term under ``n_pulses >= 1`` CPMG."""
    term = _as_term(term)
    if n_pulses < 1:
        raise ValueError("chi_cpmg_analytic needs n_pulses >= 1")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    a = term.omega_c + 1j * term.d
    T = response(a, t, int(n_pulses))
    chi = term.B * term.omega_c * T.real
    return np.where(t == 0, 0.0, chi)


def _raw_summand(z, t, n, conj):
    # the complex summand as printed; conj=True flips i -> -i
    j = -1j if conj else 1j
    if n % 2 == 0:
        x = t * z / n
        inner = n * np.tan(x / 2) + 4 * np.exp(-0.5 * j * t * z) * np.sin(t * z / 2) * np.sin(x / 4) ** 4 / np.cos(x / 2) ** 2
        return j * inner / z**2
    num = (1 - np.exp(j * t * z / (2 * n))) ** 4 * (1 + np.exp(-j * t * z)) - 2 * n * (1 - np.exp(2 * j * t * z / n))
    return num / (2 * (1 + np.exp(j * t * z / n)) ** 2 * z**2)


def chi_cpmg_unstabilized(term, n_pulses, t):
    """Complex CPMG attenuation straight from the unregrouped expressions.

    The secular term plus the ``z- = d - i omega_c`` summand and its complex
    conjugate form evaluated at ``z+ = d + i omega_c``. Overflows for large
    ``t omega_c``; kept to check realness and the regrouped evaluation.
    """
    term = _as_term(term)
    t = np.asarray(t, dtype=float)
    n = int(n_pulses)
    zm = term.d - 1j * term.omega_c
    zp = term.d + 1j * term.omega_c
    secular = term.B * t * term.omega_c**2 / (term.omega_c**2 + term.d**2)
    pref = term.B * term.omega_c
    return secular + pref * (_raw_summand(zm, t, n, False) + _raw_summand(zp, t, n, True))


def chi_fid_closed(term, t):
    """FID attenuation ``B omega_c t^2 Re phi2(a t)``.

    For ``d = 0`` this is ``(B/omega_c)(omega_c t - 1 + exp(-omega_c t))``.
    """
    term = _as_term(term)
    t = np.asarray(t, dtype=float)
    a = term.omega_c + 1j * term.d
    return term.B * term.omega_c * (t**2 * phi2(a * t)).real


def chi_segments(term, n_pulses, t):
    """Attenuation from the direct switching-function double integral (any ``n_pulses``)."""
    term = _as_term(term)
    t = np.asarray(t, dtype=float)
    a = term.omega_c + 1j * term.d
    return term.B * term.omega_c * _segment_response(a, t, int(n_pulses)).real


def _signed_jumps(seq, t):
    # F(w t) = |sum_k c_k exp(i w tau_k)|^2 / w^2 for the switching function
    tau = seq.switching_edges(t)
    s = (-1.0) ** np.arange(seq.n_pulses + 1)
    c = np.concatenate(([0.0], s)) - np.concatenate((s, [0.0]))
    return tau, c


def _tail_oscillation(spectrum, seq, t, omega_hi):
    """Oscillating part of the tail past ``omega_hi`` and a bound on what is left.

    Two integrations by parts of ``int g(w) cos(w D) dw`` with
    ``g = S / w^2``; the leftover is at most ``|g'(omega_hi)| / D^2`` when ``g``
    is convex and decreasing.
    """
    tau, c = _signed_jumps(seq, t)
    D = tau[:, None] - tau[None, :]
    cc = np.outer(c, c)
    off = ~np.eye(tau.size, dtype=bool)
    D, cc = D[off], cc[off]
    h = 1e-3 * omega_hi
    s0, sp, sm = spectrum(np.array([omega_hi, omega_hi + h, omega_hi - h]))
    g = s0 / omega_hi**2
    dg = (sp - sm) / (2 * h) / omega_hi**2 - 2 * s0 / omega_hi**3
    value = np.sum(cc * (-g * np.sin(omega_hi * D) / D - dg * np.cos(omega_hi * D) / D**2))
    bound = np.sum(np.abs(cc) / D**2) * abs(dg)
    return float(value) / (2 * np.pi), float(bound) / (2 * np.pi)


def _panel_edges(t, omega_hi, cfg):
    # coarse panels span at most two periods of the filter oscillation
    h_osc = 4 * np.pi / t
    h0 = min(cfg.panel_width, h_osc)
    w_fine = min(cfg.feature_max, omega_hi)
    fine = np.arange(0.0, w_fine, h0)
    edges = [fine]
    x = fine[-1] + h0 if fine.size else 0.0
    if x < omega_hi:
        coarse = []
        while x < omega_hi:
            coarse.append(x)
            x += min(h_osc, max(h0, 0.25 * x))
        edges.append(np.array(coarse))
    edges = np.concatenate(edges + [[omega_hi]])
    return np.unique(edges)


def chi_quadrature(spectrum, seq, t, cfg: QuadratureConfig | None = None, full_output=False):
    """``chi(t) = (1/2pi) int_0^inf S(w) F(w t) dw`` by adaptive Gauss-Kronrod.

    Past ``omega_hi`` the filter is ``P(w)/w^2`` with ``P`` a trigonometric
    polynomial of mean ``sum c_k^2``. The mean part of that tail is integrated
    after the substitution ``u = 1/w``; the oscillating part is integrated by
    parts twice and the leftover is reported in the error estimate (it assumes
    ``S(w)/w^2`` is convex and decreasing past ``omega_hi``).

    Raises ``ToleranceError`` if the total error estimate exceeds
    ``max(abs_tol, rel_tol |chi|)``.
    """
    seq = as_sequence(seq)
    cfg = cfg or QuadratureConfig()
    t = float(t)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return (0.0, 0.0) if full_output else 0.0

    def body(w):
        return spectrum(w) * filter_function(seq, w, t)

    if cfg.omega_max is not None:
        omega_hi = float(cfg.omega_max)
        osc, osc_err = _tail_oscillation(spectrum, seq, t, omega_hi)
    else:
        omega_hi = max(cfg.feature_max, 8 * np.pi * (seq.n_pulses + 1) / t)
        osc, osc_err = _tail_oscillation(spectrum, seq, t, omega_hi)
        while osc_err > cfg.abs_tol / 4 and omega_hi < 1e9:
            omega_hi *= 1.5
            osc, osc_err = _tail_oscillation(spectrum, seq, t, omega_hi)

    edges = _panel_edges(t, omega_hi, cfg)
    scale = 2 * np.pi
    val, err = integrate(
        body, edges, abs_tol=cfg.abs_tol * scale / 4, rel_tol=cfg.rel_tol / 4,
        max_panels=cfg.max_subdivisions,
    )

    mean_coeff = mean_filter_coefficient(seq)

    def tail(u):
        return spectrum(1.0 / u)

    tval, terr = integrate(tail, [0.0, 1.0 / omega_hi], abs_tol=cfg.abs_tol / 4, rel_tol=cfg.rel_tol / 4)
    chi = float(val) / scale + mean_coeff * float(tval) / scale + osc
    error = float(err) / scale + mean_coeff * float(terr) / scale + osc_err
    tol = max(cfg.abs_tol, cfg.rel_tol * abs(chi))
    if error > tol:
        raise ToleranceError(
            f"chi quadrature error estimate {error:.3e} exceeds tolerance {tol:.3e}",
            value=chi, error=error,
        )
    return (chi, error) if full_output else chi


def attenuation(model: SpectrumModel, seq, times, fid_method="closed", cfg=None):
    """Total ``chi`` of a Lorentzian-sum model at each time.

    CPMG uses the closed form. FID uses the closed form by default
    (``fid_method="closed"``) or quadrature (``fid_method="quadrature"``).
    """
    seq = as_sequence(seq)
    times = _check_times(times)
    p = model.params
    if p.shape[0] == 0:
        return np.zeros_like(times)
    if seq.n_pulses == 0 and fid_method == "quadrature":
        return np.array([chi_quadrature(model, seq, t, cfg) for t in times])
    if seq.n_pulses == 0 and fid_method != "closed":
        raise ValueError(f"unknown fid_method {fid_method!r}")
    return chi_model(model, seq, times)


def chi_model(model: SpectrumModel, seq, times):
    """Closed-form ``chi`` at arbitrary (unsorted) nonnegative times."""
    seq = as_sequence(seq)
    times = np.asarray(times, dtype=float)
    p = model.params
    if p.shape[0] == 0:
        return np.zeros_like(times)
    a = (p[:, 1] * 1j + p[:, 2]).reshape((-1,) + (1,) * times.ndim)
    T = response(a, times[None, ...], seq.n_pulses)
    pref = (p[:, 0] * p[:, 2]).reshape(a.shape)
    chi = np.sum(pref * T.real, axis=0)
    return np.where(times == 0, 0.0, chi)


def _check_times(times):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if not np.all(np.isfinite(times)):
        raise ValueError("times must be finite")
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    return times


def coherence_from_chi(chi, return_flags=False):
    chi = np.asarray(chi, dtype=float)
    clamped = chi >= CHI_CLAMP
    C = np.where(clamped, 0.0, np.exp(-np.minimum(chi, CHI_CLAMP)))
    if np.any(clamped) and not return_flags:
        warnings.warn("attenuation above clamp; coherence reported as 0", RuntimeWarning)
    return (C, clamped) if return_flags else C


def coherence(model: SpectrumModel, seq, times, fid_method="closed", cfg=None, return_flags=False):
    """Coherence ``exp(-chi)`` of a model under ``seq`` at ``times``."""
    chi = attenuation(model, seq, times, fid_method=fid_method, cfg=cfg)
    return coherence_from_chi(chi, return_flags=return_flags)
