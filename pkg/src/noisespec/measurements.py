"""Coherence-decay measurement containers and the deterministic seed-splitting helper."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectra import PulseSequence, as_sequence


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class CoherenceCurve:
    seq: PulseSequence
    times: np.ndarray
    values: np.ndarray
    sigma: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "seq", as_sequence(self.seq))
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise ValueError("times and values must be finite")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(times < 0):
            raise ValueError("times must be nonnegative")
        if np.any((values < 0) | (values > 1)):
            raise ValueError("coherence values must lie in [0, 1]")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.sigma is not None:
            sigma = np.asarray(self.sigma, dtype=float)
            if sigma.shape != times.shape or np.any(sigma < 0):
                raise ValueError("sigma must match times and be nonnegative")
            object.__setattr__(self, "sigma", sigma)
        if not self.label:
            object.__setattr__(self, "label", self.seq.name)

    def __len__(self):
        return self.times.size

    def weights(self) -> np.ndarray:
        """Per-point time weights ``dt`` for the discrete loss.

        Uniform grids get ``dt`` on every point. Nonuniform grids get trapezoid
        weights rescaled to the same total, ``n T / (n - 1)``.
        """
        t = self.times
        n = t.size
        if n < 2:
            raise ValueError("a curve needs at least two points")
        steps = np.diff(t)
        if np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            return np.full(n, steps[0])
        trap = np.zeros(n)
        trap[:-1] += steps / 2
        trap[1:] += steps / 2
        span = t[-1] - t[0]
        return trap * (n * span / (n - 1)) / trap.sum()


@dataclass(frozen=True)
class MeasurementSet:
    curves: tuple[CoherenceCurve, ...]
    omega0_hz: float | None = None
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "curves", tuple(self.curves))

    def __len__(self):
        return len(self.curves)

    def __iter__(self):
        return iter(self.curves)

    def __getitem__(self, i):
        return self.curves[i]

    @property
    def n_points(self) -> int:
        return sum(len(c) for c in self.curves)

    def subset(self, indices) -> "MeasurementSet":
        indices = list(indices)
        if not indices:
            raise ValueError("subset must be nonempty")
        for i in indices:
            if not 0 <= i < len(self.curves):
                raise IndexError(f"curve index {i} out of range for {len(self.curves)} curves")
        return MeasurementSet(tuple(self.curves[i] for i in indices), self.omega0_hz, self.notes)

    def pulse_numbers(self) -> list[int]:
        return [c.seq.n_pulses for c in self.curves]


def derive_seed(master: int, *keys: int) -> int:
    """Split a master seed into an independent 64-bit child seed.

    ``derive_seed(m, k1, k2, ...)`` is the first 64-bit word of
    ``numpy.random.SeedSequence(m, spawn_key=(k1, k2, ...))``. Restarts, runs and
    noise streams all draw from seeds derived this way, so no global RNG state
    is ever touched.
    """
    ss = np.random.SeedSequence(int(master) % 2**64, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
