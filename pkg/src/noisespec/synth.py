"""Synthetic test spectra, simulated coherence measurements and an OU Monte-Carlo oracle.

Simulated coherences always go through ``chi_quadrature`` so that fitting
roundtrips are not checked against the closed forms they are fitted with.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .attenuation import CHI_CLAMP, QuadratureConfig, chi_quadrature
from .measurements import CoherenceCurve, MeasurementSet, derive_seed
from .quadrature import ToleranceError
from .spectra import LorentzianTerm, PulseSequence, SpectrumModel, as_sequence, eval_spectrum

KINDS = ("lorentzian-sum", "ohmic", "one-over-f")


class DivergenceError(ValueError):
    """A spectrum or coherence that diverges where it was requested."""


@dataclass(frozen=True)
class AnalyticSpectrum:
    kind: str
    eta: float = 3.3
    gamma: float = 1.1
    zeta: float = 6.0
    model: SpectrumModel | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        if self.kind == "lorentzian-sum" and self.model is None:
            raise ValueError("lorentzian-sum needs a model")
        if self.kind == "ohmic" and not (self.eta > 0 and self.gamma > 0):
            raise ValueError("eta and gamma must be positive")
        if self.kind == "one-over-f" and not self.zeta > 0:
            raise ValueError("zeta must be positive")

    def __call__(self, omega):
        return eval_analytic(self, omega)

    def to_dict(self) -> dict:
        if self.kind == "lorentzian-sum":
            terms = [{"B": t.B, "d": t.d, "omega_c": t.omega_c} for t in self.model.terms]
            return {"version": 1, "kind": self.kind, "terms": terms}
        if self.kind == "ohmic":
            return {"version": 1, "kind": self.kind, "eta": self.eta, "gamma": self.gamma}
        return {"version": 1, "kind": self.kind, "zeta": self.zeta}

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyticSpectrum":
        if d.get("version", 1) != 1:
            raise ValueError(f"unsupported spectrum config version {d.get('version')}")
        kind = d["kind"]
        if kind == "lorentzian-sum":
            terms = tuple(LorentzianTerm(float(t["B"]), float(t["d"]), float(t["omega_c"])) for t in d["terms"])
            return cls(kind, model=SpectrumModel(terms))
        if kind == "ohmic":
            return cls(kind, eta=float(d.get("eta", 3.3)), gamma=float(d.get("gamma", 1.1)))
        if kind == "one-over-f":
            return cls(kind, zeta=float(d.get("zeta", 6.0)))
        raise ValueError(f"unknown spectrum kind {kind!r}")


def eval_analytic(spec: AnalyticSpectrum, omega):
    omega = np.asarray(omega, dtype=float)
    if spec.kind == "lorentzian-sum":
        return eval_spectrum(spec.model, omega)
    if spec.kind == "ohmic":
        return spec.eta * np.abs(omega) / (omega**2 + spec.gamma**2)
    if np.any(omega == 0):
        raise DivergenceError("the 1/f spectrum diverges at omega = 0")
    return spec.zeta / np.abs(omega)


def canonical_spectrum() -> AnalyticSpectrum:
    """The shipped three-Lorentzian test spectrum (package data, versioned)."""
    text = resources.files("noisespec.data").joinpath("canonical_three_lorentzian.json").read_text()
    return AnalyticSpectrum.from_dict(json.loads(text))


def ohmic_spectrum(eta=3.3, gamma=1.1) -> AnalyticSpectrum:
    return AnalyticSpectrum("ohmic", eta=eta, gamma=gamma)


def one_over_f_spectrum(zeta=6.0) -> AnalyticSpectrum:
    return AnalyticSpectrum("one-over-f", zeta=zeta)


BUILTIN_SPECTRA = {
    "canonical": canonical_spectrum,
    "three-lorentzian": canonical_spectrum,
    "ohmic": ohmic_spectrum,
    "one-over-f": one_over_f_spectrum,
}


def _as_callable(spec):
    if isinstance(spec, SpectrumModel):
        return AnalyticSpectrum("lorentzian-sum", model=spec)
    return spec


def _check_fid(spec, seq):
    if spec.kind == "one-over-f" and seq.n_pulses == 0:
        raise DivergenceError(
            "FID coherence diverges for a 1/f spectrum (the filter does not vanish at "
            "omega = 0); drop the 0-pulse sequence"
        )


def clean_coherence(spec, seq, times, cfg: QuadratureConfig | None = None) -> np.ndarray:
    """Noise-free coherence from quadrature of the filtered spectrum."""
    spec = _as_callable(spec)
    seq = as_sequence(seq)
    _check_fid(spec, seq)
    chi = []
    for t in np.atleast_1d(np.asarray(times, dtype=float)):
        try:
            chi.append(chi_quadrature(spec, seq, t, cfg))
        except ToleranceError as exc:
            # generator accuracy is far below measurement noise; keep the estimate
            chi.append(exc.value)
    chi = np.asarray(chi)
    return np.where(chi >= CHI_CLAMP, 0.0, np.exp(-np.minimum(chi, CHI_CLAMP)))


def coherence_horizon(spec, seq, level=0.01, t_cap=200.0, cfg=None) -> float:
    """Smallest time at which the clean coherence drops to ``level``.

    Brackets by doubling from ``t = 0.5`` and bisects to 1e-4 relative; capped
    at ``t_cap``.
    """
    spec = _as_callable(spec)
    seq = as_sequence(seq)
    _check_fid(spec, seq)
    quick = cfg or QuadratureConfig(abs_tol=1e-7, rel_tol=1e-6)

    def c(t):
        return clean_coherence(spec, seq, [t], quick)[0]

    hi = 0.5
    while c(hi) > level:
        if hi >= t_cap:
            return float(t_cap)
        hi = min(2 * hi, t_cap)
    lo = hi / 2 if hi > 0.5 else 0.0
    while hi - lo > 1e-4 * hi:
        mid = 0.5 * (lo + hi)
        if c(mid) > level:
            lo = mid
        else:
            hi = mid
    return float(hi)


@dataclass(frozen=True)
class NoiseSpec:
    epsilon: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")


def downsample_indices(n: int, k: int) -> np.ndarray:
    """``k`` indices out of ``n`` at (rounded) equal spacing, keeping both ends."""
    if not 2 <= k <= n:
        raise ValueError(f"cannot downsample {n} points to {k}")
    return np.unique(np.round(np.linspace(0, n - 1, k)).astype(int))


def default_time_grid(spec, seq, points=101, level=0.01, cfg=None) -> np.ndarray:
    t_f = coherence_horizon(spec, seq, level=level, cfg=cfg)
    return np.linspace(0.0, t_f, points)


def simulate_measurements(
    spec,
    sequences,
    noise: NoiseSpec | None = None,
    downsample_to: int | None = None,
    cfg: QuadratureConfig | None = None,
    points: int = 101,
) -> MeasurementSet:
    """Simulate coherence curves for each sequence.

    ``sequences`` holds pulse numbers, ``PulseSequence`` objects or
    ``(sequence, times)`` pairs; bare sequences get a ``points``-long uniform
    grid out to the time where the clean coherence reaches 0.01. Uniform noise
    ``U[-eps, eps)`` is added per point (curve ``j`` uses the stream
    ``derive_seed(noise.seed, j)``) and the result clipped to ``[0, 1]``.
    """
    spec = _as_callable(spec)
    noise = noise or NoiseSpec()
    pairs = []
    for item in sequences:
        if isinstance(item, tuple):
            seq, times = as_sequence(item[0]), np.asarray(item[1], dtype=float)
        else:
            seq = as_sequence(item)
            times = None
        _check_fid(spec, seq)
        pairs.append((seq, times))
    curves = []
    for j, (seq, times) in enumerate(pairs):
        if times is None:
            times = default_time_grid(spec, seq, points=points)
        clean = clean_coherence(spec, seq, times, cfg)
        values = clean
        if noise.epsilon > 0:
            rng = np.random.default_rng(derive_seed(noise.seed, j))
            values = clean + rng.uniform(-noise.epsilon, noise.epsilon, size=clean.shape)
        values = np.clip(values, 0.0, 1.0)
        if downsample_to is not None:
            idx = downsample_indices(times.size, downsample_to)
            times, values = times[idx], values[idx]
        curves.append(CoherenceCurve(seq, times, values))
    return MeasurementSet(tuple(curves))


def _ou_step_cov(k, var, dt):
    # covariance of (beta increment, integral increment) over one exact step
    x = k * dt
    e1 = np.exp(-x)
    vb = var * -np.expm1(-2 * x)
    if x < 1e-2:
        poly = (2 / 3) * x**3 - 0.5 * x**4 + (7 / 30) * x**5 - x**6 / 12
    else:
        poly = 2 * x - 3 + 4 * e1 - np.exp(-2 * x)
    vi = var / k**2 * poly
    cov = var / k * np.expm1(-x) ** 2
    return e1, np.array([[vb, cov], [cov, vi]])


def _ou_steps(k, var, steps):
    decay = np.exp(-k * steps)
    chol = np.array([np.linalg.cholesky(_ou_step_cov(k, var, dt)[1] + np.diag([1e-300, 1e-300])) for dt in steps])
    return decay, chol


def ou_paths(term, grid, n_traj, rng):
    """Sample ``n_traj`` stationary OU paths on ``grid``.

    Returns ``(beta, integral)``, both shaped ``(grid.size, n_traj)``, where
    ``integral`` is ``int_0^t beta`` with ``grid[0]`` as origin. Steps use the
    exact joint Gaussian update, so any grid spacing is allowed.
    """
    if not isinstance(term, LorentzianTerm):
        term = LorentzianTerm(*map(float, term))
    grid = np.asarray(grid, dtype=float)
    k, var = term.omega_c, term.B * term.omega_c
    steps = np.diff(grid)
    decay, chol = _ou_steps(k, var, steps)
    beta = np.empty((grid.size, n_traj))
    integral = np.zeros((grid.size, n_traj))
    beta[0] = rng.normal(0.0, np.sqrt(var), size=n_traj)
    for i, dt in enumerate(steps):
        inc = chol[i] @ rng.standard_normal((2, n_traj))
        integral[i + 1] = integral[i] + beta[i] * (-np.expm1(-k * dt)) / k + inc[1]
        beta[i + 1] = decay[i] * beta[i] + inc[0]
    return beta, integral


def ou_oracle(term, seq, times, n_traj=10_000, dt_sim=None, seed=0, batch=2_000):
    """Monte-Carlo coherence for a centered Lorentzian realized as an OU process.

    The OU process has rate ``omega_c`` and variance ``B omega_c`` (its spectrum
    is ``2 B omega_c^2 / (w^2 + omega_c^2)``). Each trajectory is advanced with
    the exact joint Gaussian update of ``(beta, int beta dt)``, so the phase
    ``phi(t) = int s(t') beta(t') dt'`` carries no discretization error.

    Returns ``(mean, stderr)``: ``|<exp(i phi)>|`` at each time and its standard
    error.
    """
    if not isinstance(term, LorentzianTerm):
        term = LorentzianTerm(*map(float, term))
    if term.d != 0:
        raise ValueError("the OU oracle only realizes centered (d = 0) Lorentzians")
    if n_traj < 100:
        raise ValueError("n_traj must be at least 100")
    seq = as_sequence(seq)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    k = term.omega_c
    if term.B == 0:
        return np.ones_like(times), np.zeros_like(times)
    if dt_sim is None:
        smallest = min((times[times > 0].min() / max(seq.n_pulses, 1)) if np.any(times > 0) else 1.0, 1.0)
        dt_sim = min(0.01 / k, smallest / 20)
    # simulation grid: every switching time of every measurement, refined to dt_sim
    marks = np.unique(np.concatenate([seq.switching_edges(t) for t in times] + [[0.0]]))
    grid = [marks[:1]]
    for lo, hi in zip(marks[:-1], marks[1:]):
        m = max(1, int(np.ceil((hi - lo) / dt_sim)))
        grid.append(np.linspace(lo, hi, m + 1)[1:])
    grid = np.concatenate(grid)
    edges_idx = [np.searchsorted(grid, seq.switching_edges(t)) for t in times]
    signs = (-1.0) ** np.arange(seq.n_pulses + 1)

    phases = []
    for b in range(int(np.ceil(n_traj / batch))):
        n = min(batch, n_traj - b * batch)
        _, integral = ou_paths(term, grid, n, np.random.default_rng(derive_seed(seed, b)))
        phi = np.zeros((times.size, n))
        for j, idx in enumerate(edges_idx):
            phi[j] = signs @ (integral[idx[1:]] - integral[idx[:-1]])
        phases.append(phi)
    phi = np.concatenate(phases, axis=1)
    z = np.exp(1j * phi)
    m = z.mean(axis=1)
    mean = np.abs(m)
    unit = np.where(mean > 0, m / np.where(mean > 0, mean, 1), 1.0)
    proj = (np.conj(unit)[:, None] * z).real
    stderr = proj.std(axis=1, ddof=1) / np.sqrt(phi.shape[1])
    return mean, stderr
