"""Time-integrated sensitivity ``G(omega) = int_0^t_f F(omega t) exp(-chi(t)) dt`` and
coverage-gap ranking of candidate pulse sequences.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attenuation import CHI_CLAMP, QuadratureConfig, chi_model, chi_quadrature
from .quadrature import integrate
from .spectra import PulseSequence, SpectrumModel, as_sequence, filter_function

# horizons (1/omega0) used when no spectrum is available to apply the C <= 0.01 rule
TF_TABLE = {0: 3.0, 1: 4.0, 5: 5.0, 8: 5.0, 32: 6.0}


@dataclass(frozen=True)
class SensitivityCurve:
    seq: PulseSequence
    t_f: float
    omega: np.ndarray
    G: np.ndarray


def _chi_function(spectrum, seq, cfg):
    if isinstance(spectrum, SpectrumModel):
        return lambda t: chi_model(spectrum, seq, t)
    loose = cfg or QuadratureConfig(abs_tol=1e-9, rel_tol=1e-7)
    return lambda t: np.array([chi_quadrature(spectrum, seq, x, loose) for x in t])


def sensitivity_curve(spectrum, seq, t_f, omega, cfg: QuadratureConfig | None = None) -> SensitivityCurve:
    """``G`` on an ``omega`` grid by adaptive quadrature in ``t``.

    ``spectrum`` is a ``SpectrumModel`` (closed-form attenuation), any callable
    spectrum (quadrature attenuation) or ``None`` for a noiseless environment.
    """
    seq = as_sequence(seq)
    t_f = float(t_f)
    if not t_f > 0:
        raise ValueError("t_f must be positive")
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if spectrum is None:
        weight = lambda t: np.ones_like(t)
    else:
        chi = _chi_function(spectrum, seq, cfg)
        weight = lambda t: np.exp(-np.minimum(chi(t), CHI_CLAMP))

    def integrand(t):
        return filter_function(seq, omega[None, :], t[:, None]) * weight(t)[:, None]

    # panels resolve the fastest filter oscillation on the grid
    w_top = max(float(np.max(np.abs(omega))), 1.0)
    n_panels = int(np.ceil(t_f / min(0.5, np.pi / w_top)))
    edges = np.linspace(0.0, t_f, n_panels + 1)
    scale = t_f**3
    G, _ = integrate(integrand, edges, abs_tol=1e-13 * scale, rel_tol=1e-11)
    return SensitivityCurve(seq, t_f, omega, np.maximum(G, 0.0))


def default_tf(seq, spectrum=None, level=0.01) -> float:
    """Horizon for a sequence: first time the coherence drops to ``level``.

    Without a spectrum, falls back to ``TF_TABLE`` (and 6 for pulse numbers
    missing from it).
    """
    seq = as_sequence(seq)
    if spectrum is None:
        return TF_TABLE.get(seq.n_pulses, 6.0)
    from .synth import coherence_horizon

    return coherence_horizon(spectrum, seq, level=level)


def flagged_regions(omega, mask):
    """Contiguous runs of ``True`` in ``mask`` as ``(omega_lo, omega_hi)`` pairs."""
    regions = []
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return regions
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    stops = np.concatenate((idx[breaks], [idx[-1]]))
    return [(float(omega[a]), float(omega[b])) for a, b in zip(starts, stops)]


def _masked_integral(omega, values, mask):
    total = 0.0
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return 0.0
    breaks = np.flatnonzero(np.diff(idx) > 1)
    for run in np.split(idx, breaks + 1):
        if run.size > 1:
            total += float(np.trapezoid(values[run], omega[run]))
    return total


@dataclass
class CoverageReport:
    omega: np.ndarray
    curves: list
    total: np.ndarray
    fraction: float
    flagged: np.ndarray
    regions: list
    candidate_curves: list
    scores: dict
    ranking: list = field(default_factory=list)

    @property
    def recommended(self) -> int | None:
        return self.ranking[0] if self.ranking else None


def _resolve_tf(seq, t_f, spectrum):
    if t_f is not None and seq.n_pulses in t_f:
        return float(t_f[seq.n_pulses])
    return default_tf(seq, spectrum)


def coverage_report(
    spectrum,
    sequences,
    omega,
    candidates=(),
    t_f: dict | None = None,
    fraction: float = 0.05,
    cfg: QuadratureConfig | None = None,
) -> CoverageReport:
    """Find low-sensitivity gaps of a measurement set and rank candidates by how
    much of their sensitivity lands in those gaps.

    A grid point is flagged when the summed ``G`` is below ``fraction`` of its
    maximum. Candidate scores are the integrals of their ``G`` over the
    flagged points; ties are broken by ascending pulse number.
    """
    sequences = [as_sequence(s) for s in sequences]
    if not sequences:
        raise ValueError("need at least one measured sequence")
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    omega = np.asarray(omega, dtype=float)
    curves = [sensitivity_curve(spectrum, s, _resolve_tf(s, t_f, spectrum), omega, cfg) for s in sequences]
    total = np.sum([c.G for c in curves], axis=0)
    flagged = total < fraction * np.max(total)
    cand = [as_sequence(s) for s in candidates]
    cand_curves = [sensitivity_curve(spectrum, s, _resolve_tf(s, t_f, spectrum), omega, cfg) for s in cand]
    scores = {c.seq.n_pulses: _masked_integral(omega, c.G, flagged) for c in cand_curves}
    ranking = sorted(scores, key=lambda n: (-scores[n], n))
    return CoverageReport(
        omega, curves, total, fraction, flagged, flagged_regions(omega, flagged),
        cand_curves, scores, ranking,
    )


def fid_free_sensitivity(omega, t_f):
    """Noiseless FID ``G = 2 (t_f - sin(omega t_f)/omega) / omega^2`` (``t_f^3/3`` at 0)."""
    omega = np.asarray(omega, dtype=float)
    x = omega * t_f
    small = np.abs(x) < 1e-3
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 2 * (t_f - np.sin(x) / omega) / omega**2
    series = t_f**3 / 3 - omega**2 * t_f**5 / 60
    return np.where(small, series, out)
