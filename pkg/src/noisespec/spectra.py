"""Trial spectra built from symmetrized Lorentzians and pulse-sequence filter functions.

All frequencies are in units of a reference frequency ``omega0`` and all times
in units of ``1/omega0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

OMEGA_C_FLOOR = 1e-6

# below this |cos(omega t / 2N)| the closed-form CPMG filter is replaced by the
# direct switching-function sum (the singularity is removable)
_POLE_GUARD = 1e-4


@dataclass(frozen=True)
class LorentzianTerm:
    """One symmetrized Lorentzian ``B [L(w - d) + L(w + d)]`` of half-width ``omega_c``."""

    B: float
    d: float
    omega_c: float

    def __post_init__(self):
        if not (self.B >= 0 and self.d >= 0):
            raise ValueError(f"B and d must be nonnegative, got B={self.B}, d={self.d}")
        if not self.omega_c >= OMEGA_C_FLOOR:
            raise ValueError(f"omega_c={self.omega_c} is below the floor {OMEGA_C_FLOOR}")


@dataclass(frozen=True)
class SpectrumModel:
    terms: tuple[LorentzianTerm, ...] = ()
    omega0_hz: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    @classmethod
    def from_params(cls, theta, omega0_hz=None) -> "SpectrumModel":
        """Build a model from a flat ``(B1, d1, wc1, B2, ...)`` vector."""
        theta = np.asarray(theta, dtype=float).reshape(-1, 3)
        return cls(tuple(LorentzianTerm(*map(float, row)) for row in theta), omega0_hz)

    @property
    def params(self) -> np.ndarray:
        if not self.terms:
            return np.zeros((0, 3))
        return np.array([[t.B, t.d, t.omega_c] for t in self.terms])

    def __add__(self, other: "SpectrumModel") -> "SpectrumModel":
        return SpectrumModel(self.terms + other.terms, self.omega0_hz or other.omega0_hz)

    def __len__(self):
        return len(self.terms)

    def __call__(self, omega):
        return eval_spectrum(self, omega)

    def resolved(self, floor: float = OMEGA_C_FLOOR) -> "SpectrumModel":
        """Drop terms pinned at the width floor.

        Such a term carries integrated weight of order ``B * floor`` and leaves
        every coherence unchanged, yet evaluates to ``2B`` at ``omega = d``.
        """
        keep = tuple(t for t in self.terms if t.omega_c > floor * (1 + 1e-9))
        return SpectrumModel(keep, self.omega0_hz)

    def scaled(self, factor: float) -> "SpectrumModel":
        return SpectrumModel(
            tuple(LorentzianTerm(t.B * factor, t.d, t.omega_c) for t in self.terms),
            self.omega0_hz,
        )


@dataclass(frozen=True)
class PulseSequence:
    """FID (0 pulses), spin echo (1 pulse) or CPMG with ``n_pulses`` pi pulses."""

    n_pulses: int

    def __post_init__(self):
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 0:
            raise ValueError(f"n_pulses must be a nonnegative integer, got {self.n_pulses}")
        object.__setattr__(self, "n_pulses", int(self.n_pulses))

    @property
    def name(self) -> str:
        if self.n_pulses == 0:
            return "FID"
        if self.n_pulses == 1:
            return "SE"
        return f"CPMG{self.n_pulses}"

    @property
    def is_even(self) -> bool:
        return self.n_pulses % 2 == 0

    def switching_edges(self, t: float) -> np.ndarray:
        """Segment boundaries of the +-1 switching function on ``[0, t]``.

        Pulses sit at ``(k - 1/2) t / N`` for ``k = 1..N``.
        """
        n = self.n_pulses
        inner = (np.arange(1, n + 1) - 0.5) * t / n if n else np.empty(0)
        return np.concatenate(([0.0], inner, [t]))

    def jump_weights(self) -> np.ndarray:
        """Jump amplitudes of the switching function (endpoints 1, pulses 2)."""
        c = np.full(self.n_pulses + 2, 2.0)
        c[0] = c[-1] = 1.0
        return c


def as_sequence(seq) -> PulseSequence:
    return seq if isinstance(seq, PulseSequence) else PulseSequence(int(seq))


def eval_spectrum(model: SpectrumModel, omega):
    """Evaluate the Lorentzian-sum spectrum at ``omega`` (vectorized)."""
    omega = np.asarray(omega, dtype=float)
    p = model.params
    if p.shape[0] == 0:
        return np.zeros_like(omega)
    B, d, wc = (p[:, k].reshape((-1,) + (1,) * omega.ndim) for k in range(3))
    wc2 = wc * wc
    lor = wc2 / (wc2 + (omega - d) ** 2) + wc2 / (wc2 + (omega + d) ** 2)
    return np.sum(B * lor, axis=0)


def _filter_direct(n_pulses, omega, t):
    # |FT of the switching function|^2, valid for any omega != 0
    seq = PulseSequence(n_pulses)
    omega = np.asarray(omega, dtype=float)
    t = np.asarray(t, dtype=float)
    omega, t = np.broadcast_arrays(omega, t)
    acc = np.zeros(omega.shape, dtype=complex)
    frac = seq.switching_edges(1.0)
    sign = 1.0
    for a, b in zip(frac[:-1], frac[1:]):
        acc += sign * (np.exp(1j * omega * t * b) - np.exp(1j * omega * t * a))
        sign = -sign
    return np.abs(acc) ** 2 / omega**2


def filter_function(seq, omega, t):
    """Filter function ``F(omega t)`` of a pulse sequence (time^2 units).

    The closed forms are rewritten with ``sinc`` factors so ``omega -> 0`` needs
    no special casing (``F_FID -> t^2``, CPMG branches ``-> 0``). The zeros of
    ``cos(omega t / 2N)`` are removable singularities; there the value comes from
    the switching-function sum instead of the ratio.
    """
    seq = as_sequence(seq)
    omega = np.asarray(omega, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    x = omega * t
    n = seq.n_pulses
    if n == 0:
        return t**2 * np.sinc(x / (2 * np.pi)) ** 2
    y = x / (4 * n)
    env = 16 * (t / (4 * n)) ** 4 * omega**2 * np.sinc(y / np.pi) ** 4
    osc = np.sin(x / 2) ** 2 if n % 2 == 0 else np.cos(x / 2) ** 2
    c = np.cos(2 * y)
    near = np.abs(c) < _POLE_GUARD
    with np.errstate(divide="ignore", invalid="ignore"):
        out = env * osc / c**2
    if np.any(near):
        out = np.array(out, dtype=float, copy=True)
        om_b, t_b = np.broadcast_arrays(omega, t)
        out[near] = _filter_direct(n, om_b[near], t_b[near])
    return out


def mean_filter_coefficient(seq) -> float:
    """Large-omega average of ``omega^2 F``: sum of squared switching jumps."""
    return float(np.sum(as_sequence(seq).jump_weights() ** 2))


def concat_models(models: Iterable[SpectrumModel]) -> SpectrumModel:
    out = SpectrumModel()
    for m in models:
        out = out + m
    return out


def model_from_terms(rows: Sequence[Sequence[float]]) -> SpectrumModel:
    return SpectrumModel(tuple(LorentzianTerm(*map(float, r)) for r in rows))
