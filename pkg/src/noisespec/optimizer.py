"""Projected Adam/AdamW fitting of a Lorentzian basis to coherence curves.

The loss is ``L = (1/N_t) sum_jk w_jk (C_jk - C_trial_jk)^2`` with ``w`` the
per-point time weights of each curve. Gradients are exact: ``chi`` is linear
in ``B`` and the ``d``, ``omega_c`` partials come from the complex derivative
of the response function.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .attenuation import CHI_CLAMP, PackedResponse, response
from .measurements import GridMismatchError, MeasurementSet, derive_seed
from .spectra import OMEGA_C_FLOOR, SpectrumModel


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: str = "adam"
    lr: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    xi: float = 1e-5
    max_iter: int = 10_000
    max_restarts: int = 10
    grad_mode: str = "analytic"
    omega_c_floor: float = OMEGA_C_FLOOR
    d_max: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.algorithm not in ("adam", "adamw"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ValueError("betas must lie in [0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.weight_decay >= 0:
            raise ValueError("weight_decay must be nonnegative")
        if self.weight_decay and self.algorithm == "adam":
            raise ValueError("weight_decay needs algorithm='adamw'")
        if not self.xi > 0:
            raise ValueError("xi must be positive")
        if self.max_iter < 0 or self.max_restarts < 0:
            raise ValueError("max_iter and max_restarts must be nonnegative")
        if self.grad_mode not in ("analytic", "central-difference"):
            raise ValueError(f"unknown grad_mode {self.grad_mode!r}")

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm, "lr": self.lr, "betas": list(self.betas),
            "eps": self.eps, "weight_decay": self.weight_decay, "xi": self.xi,
            "max_iter": self.max_iter, "max_restarts": self.max_restarts,
            "grad_mode": self.grad_mode, "omega_c_floor": self.omega_c_floor,
            "d_max": self.d_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        d = dict(d)
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)


PRESETS = {
    "default": OptimizerConfig(),
    "fig2": OptimizerConfig(algorithm="adam", lr=0.01),
    "fig3ab": OptimizerConfig(algorithm="adam", lr=0.01),
    "fig3cd": OptimizerConfig(algorithm="adamw", lr=0.01, eps=1e-6, weight_decay=0.01, betas=(0.9, 0.9)),
    "fig4": OptimizerConfig(algorithm="adamw", lr=0.02, weight_decay=0.4),
    "fig-ftns": OptimizerConfig(algorithm="adamw", lr=0.01, weight_decay=0.1),
}


def preset(name: str, **overrides) -> OptimizerConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides)


def lower_bounds(n_basis: int, omega_c_floor: float = OMEGA_C_FLOOR) -> np.ndarray:
    lb = np.zeros((n_basis, 3))
    lb[:, 2] = omega_c_floor
    return lb.ravel()


def project(theta, omega_c_floor: float = OMEGA_C_FLOOR) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return np.maximum(theta, lower_bounds(theta.size // 3, omega_c_floor))


def init_params(n_basis: int, seed: int, d_max: float = 20.0, b_range=(0.0, 10.0), wc_range=(0.1, 10.0)) -> np.ndarray:
    """Random starting point: ``B ~ U[0, 10]``, ``omega_c ~ U[0.1, 10]``, and ``d_i``
    uniform on the ``i``-th of ``n_basis`` equal slices of ``[0, d_max]``."""
    if n_basis < 1:
        raise ValueError("n_basis must be at least 1")
    rng = np.random.default_rng(seed)
    delta = d_max / n_basis
    i = np.arange(n_basis)
    B = rng.uniform(*b_range, size=n_basis)
    d = rng.uniform(i * delta, (i + 1) * delta)
    wc = rng.uniform(*wc_range, size=n_basis)
    return np.column_stack((B, d, wc)).ravel()


class Problem:
    """A measurement set packed for repeated loss and gradient evaluation.

    All CPMG points of all curves are evaluated in one vectorized pass; FID
    points use the closed form.
    """

    def __init__(self, measured: MeasurementSet):
        if len(measured) == 0:
            raise ValueError("measurement set is empty")
        self.measured = measured
        t, n, c, w = [], [], [], []
        for curve in measured:
            if len(curve) < 2:
                raise ValueError(f"curve {curve.label} needs at least two points")
            t.append(curve.times)
            n.append(np.full(len(curve), curve.seq.n_pulses))
            c.append(curve.values)
            w.append(curve.weights())
        t, n, c, w = (np.concatenate(x) for x in (t, n, c, w))
        self.n_points = t.size
        self.sizes = [len(curve) for curve in measured]
        fid = n == 0
        # points are reordered as (FID..., CPMG...)
        self.order = np.concatenate((np.flatnonzero(fid), np.flatnonzero(~fid)))
        self.n_fid = int(fid.sum())
        self.t_fid = t[fid]
        self.cpmg = PackedResponse(t[~fid], n[~fid]) if np.any(~fid) else None
        self.values = c[self.order]
        self.weights = w[self.order]

    def _response(self, theta, derivative):
        p = np.asarray(theta, dtype=float).reshape(-1, 3)
        a = (p[:, 2] + 1j * p[:, 1])[:, None]
        parts, dparts = [], []
        if self.n_fid:
            out = response(a, self.t_fid[None, :], 0, derivative)
            parts.append(out[0] if derivative else out)
            if derivative:
                dparts.append(out[1])
        if self.cpmg is not None:
            out = self.cpmg(a, derivative)
            parts.append(out[0] if derivative else out)
            if derivative:
                dparts.append(out[1])
        T = np.concatenate(parts, axis=1)
        return p, T, (np.concatenate(dparts, axis=1) if derivative else None)

    def trial(self, theta):
        """Trial coherences, one array per curve (measurement order)."""
        p, T, _ = self._response(theta, False)
        chi = (p[:, 0] * p[:, 2]) @ T.real
        packed = np.exp(-np.minimum(chi, CHI_CLAMP))
        flat = np.empty_like(packed)
        flat[self.order] = packed
        return np.split(flat, np.cumsum(self.sizes)[:-1])

    def loss(self, theta) -> float:
        p, T, _ = self._response(theta, False)
        chi = (p[:, 0] * p[:, 2]) @ T.real
        r = np.exp(-np.minimum(chi, CHI_CLAMP)) - self.values
        return float(np.sum(self.weights * r * r) / self.n_points)

    def loss_and_grad(self, theta):
        p, T, dT = self._response(theta, True)
        B, wc = p[:, 0:1], p[:, 2:3]
        chi = np.sum(B * wc * T.real, axis=0)
        live = chi < CHI_CLAMP
        ct = np.exp(-np.minimum(chi, CHI_CLAMP))
        r = ct - self.values
        value = np.sum(self.weights * r * r) / self.n_points
        # dL/dchi per point (zero where chi is clamped)
        g = np.where(live, -2 * self.weights * r * ct, 0.0) / self.n_points
        grad = np.empty_like(p)
        grad[:, 0] = (wc * T.real) @ g
        grad[:, 1] = -(B * wc * dT.imag) @ g
        grad[:, 2] = (B * T.real + B * wc * dT.real) @ g
        return float(value), grad.ravel()

    def grad_fd(self, theta, rel_step=1e-5):
        """Central finite-difference gradient with step ``rel_step * max(|theta_i|, 1)``."""
        theta = np.asarray(theta, dtype=float)
        g = np.zeros_like(theta)
        for i in range(theta.size):
            h = rel_step * max(abs(theta[i]), 1.0)
            tp, tm = theta.copy(), theta.copy()
            tp[i] += h
            tm[i] -= h
            g[i] = (self.loss(tp) - self.loss(tm)) / (2 * h)
        return g

    def value_and_gradient(self, theta, grad_mode="analytic"):
        if grad_mode == "analytic":
            return self.loss_and_grad(theta)
        return self.loss(theta), self.grad_fd(theta)


def loss(measured: MeasurementSet, trial_curves) -> float:
    """Weighted mean squared coherence error between measured and trial curves."""
    trial_curves = list(trial_curves)
    if len(trial_curves) != len(measured):
        raise GridMismatchError(f"{len(trial_curves)} trial curves for {len(measured)} measured curves")
    total = 0.0
    for curve, trial in zip(measured, trial_curves):
        values = getattr(trial, "values", trial)
        values = np.asarray(values, dtype=float)
        times = getattr(trial, "times", None)
        if values.shape != curve.values.shape or (times is not None and not np.array_equal(times, curve.times)):
            raise GridMismatchError(f"trial curve for {curve.label} is not on the measured time grid")
        total += np.sum(curve.weights() * (values - curve.values) ** 2)
    return float(total / measured.n_points)


def gradient(theta, measured: MeasurementSet, cfg: OptimizerConfig | None = None) -> np.ndarray:
    cfg = cfg or OptimizerConfig()
    return Problem(measured).value_and_gradient(theta, cfg.grad_mode)[1]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size):
        return cls(np.zeros(size), np.zeros(size), 0)


def step(theta, state: AdamState, grad, cfg: OptimizerConfig):
    """One bias-corrected Adam (or decoupled-decay AdamW) update, then projection."""
    b1, b2 = cfg.betas
    k = state.step + 1
    m = b1 * state.m + (1 - b1) * grad
    v = b2 * state.v + (1 - b2) * grad * grad
    theta = np.asarray(theta, dtype=float)
    if cfg.algorithm == "adamw":
        theta = theta * (1 - cfg.lr * cfg.weight_decay)
    m_hat = m / (1 - b1**k)
    v_hat = v / (1 - b2**k)
    theta = theta - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return project(theta, cfg.omega_c_floor), AdamState(m, v, k)


@dataclass
class RunResult:
    theta: np.ndarray
    final_loss: float
    iterations: int
    restarts_used: int
    converged: bool
    seed: int
    wall_time: float = 0.0
    loss_history: list = field(default_factory=list)

    @property
    def attempts(self) -> int:
        return self.restarts_used + 1

    @property
    def failed_attempts(self) -> int:
        return self.restarts_used + (0 if self.converged else 1)

    def model(self, omega0_hz=None) -> SpectrumModel:
        return SpectrumModel.from_params(self.theta, omega0_hz)


def _descend(problem: Problem, theta, cfg: OptimizerConfig):
    # returns (theta, loss, steps taken, history, converged)
    state = AdamState.zeros(theta.size)
    history = []
    for it in range(cfg.max_iter + 1):
        value, grad = problem.value_and_gradient(theta, cfg.grad_mode)
        history.append(value)
        if value <= cfg.xi:
            return theta, value, it, history, True
        if it == cfg.max_iter:
            break
        theta, state = step(theta, state, grad, cfg)
    return theta, value, cfg.max_iter, history, False


def fit(measured, n_basis: int, cfg: OptimizerConfig | None = None, seed: int = 0, theta0=None) -> RunResult:
    """Fit an ``n_basis``-term model, restarting from fresh random points on failure.

    Attempt ``r`` starts from ``init_params(n_basis, derive_seed(seed, r))``
    (or ``theta0`` for the first attempt when given). Never raises for
    non-convergence; the result carries ``converged=False`` instead.
    """
    cfg = cfg or OptimizerConfig()
    problem = measured if isinstance(measured, Problem) else Problem(measured)
    start = time.perf_counter()
    histories = []
    total_steps = 0
    for r in range(cfg.max_restarts + 1):
        if r == 0 and theta0 is not None:
            theta = project(np.asarray(theta0, dtype=float), cfg.omega_c_floor)
            if theta.size != 3 * n_basis:
                raise ValueError("theta0 has the wrong length")
        else:
            theta = init_params(n_basis, derive_seed(seed, r), d_max=cfg.d_max)
            theta = project(theta, cfg.omega_c_floor)
        theta, value, steps, hist, ok = _descend(problem, theta, cfg)
        histories.append(np.asarray(hist))
        total_steps += steps
        if ok:
            break
    return RunResult(
        theta=theta, final_loss=value, iterations=total_steps, restarts_used=r,
        converged=ok, seed=int(seed), wall_time=time.perf_counter() - start,
        loss_history=histories,
    )
