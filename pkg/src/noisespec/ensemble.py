"""Ensembles of independently seeded fits and the convergence / subsampling studies.

Run ``k`` of an ensemble always uses seed ``derive_seed(master_seed, k)``, so
aggregates do not depend on execution order or on the number of workers.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .measurements import MeasurementSet, derive_seed
from .optimizer import OptimizerConfig, Problem, RunResult, fit
from .spectra import SpectrumModel, eval_spectrum

WORKERS_ENV = "NOISESPEC_WORKERS"


def default_grid() -> np.ndarray:
    return np.linspace(0.0, 20.0, 1001)


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(value))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {value!r}") from None


class AllRunsFailedError(RuntimeError):
    def __init__(self, message, runs):
        super().__init__(message)
        self.runs = runs


@dataclass
class EnsembleResult:
    omega: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    runs: list
    failures: int
    spectra: np.ndarray = field(repr=False, default=None)

    @property
    def converged_runs(self) -> list:
        return [r for r in self.runs if r.converged]

    def contains(self, truth, k=3.0) -> np.ndarray:
        """Pointwise flag: ``|truth - mean| <= k std``."""
        return np.abs(np.asarray(truth) - self.mean) <= k * self.std


def _fit_job(args):
    problem, n_basis, cfg, seed = args
    return fit(problem, n_basis, cfg, seed)


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def aggregate(spectra: np.ndarray):
    """Pointwise mean and population standard deviation over runs (rows)."""
    spectra = np.asarray(spectra, dtype=float)
    mean = spectra.mean(axis=0)
    std = np.sqrt(np.mean((spectra - mean) ** 2, axis=0))
    return mean, std


def run_ensemble(
    measured: MeasurementSet,
    n_basis: int,
    cfg: OptimizerConfig | None = None,
    n_runs: int = 20,
    master_seed: int = 0,
    omega=None,
    workers: int | None = None,
) -> EnsembleResult:
    """``n_runs`` independent fits aggregated into a mean spectrum with a std band.

    Only converged runs enter the aggregates, and terms collapsed onto the
    width floor are dropped before evaluation. ``failures`` counts every
    non-converged attempt, restarts included.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    cfg = cfg or OptimizerConfig()
    omega = default_grid() if omega is None else np.asarray(omega, dtype=float)
    if omega.ndim != 1 or np.any(np.diff(omega) < 0):
        raise ValueError("omega grid must be a sorted 1-D array")
    workers = default_workers() if workers is None else workers
    problem = Problem(measured)
    jobs = [(problem, n_basis, cfg, derive_seed(master_seed, k)) for k in range(n_runs)]
    runs = _map(_fit_job, jobs, workers)
    failures = sum(r.failed_attempts for r in runs)
    good = [r for r in runs if r.converged]
    if not good:
        raise AllRunsFailedError(f"none of the {n_runs} runs converged", runs)
    spectra = model_spectra(good, omega)
    mean, std = aggregate(spectra)
    return EnsembleResult(omega, mean, std, runs, failures, spectra)


@dataclass
class StudyCell:
    xi: float
    n_basis: int
    successes: int
    failures: int
    wall_time: float
    success: bool
    runs: list = field(default_factory=list, repr=False)


@dataclass
class StudyReport:
    n_runs: int
    cells: list

    def cell(self, xi, n_basis) -> StudyCell:
        for c in self.cells:
            if c.xi == xi and c.n_basis == n_basis:
                return c
        raise KeyError((xi, n_basis))


def study_cell(fit_fn, n_runs, master_seed, xi=None, n_basis=None, cell_index=0, workers=1) -> StudyCell:
    """Single-attempt fits until ``n_runs`` successes or ``ceil(n_runs/2)`` failures.

    Attempt ``k`` uses ``derive_seed(master_seed, cell_index, k)``. With
    several workers, attempts are launched in batches and the outcome is
    replayed in attempt order, so the counts match a serial run exactly.
    """
    max_failures = math.ceil(n_runs / 2)
    successes = failures = 0
    runs = []
    start = time.perf_counter()
    k = 0
    while successes < n_runs and failures < max_failures:
        need = min(n_runs - successes, max_failures - failures)
        batch = list(range(k, k + (need if workers > 1 else 1)))
        results = _map(fit_fn, [derive_seed(master_seed, cell_index, j) for j in batch], workers)
        for r in results:
            if successes >= n_runs or failures >= max_failures:
                break
            runs.append(r)
            if r.converged:
                successes += 1
            else:
                failures += 1
        k += len(batch)
    return StudyCell(
        xi, n_basis, successes, failures, time.perf_counter() - start,
        successes >= n_runs, runs,
    )


class _CellFit:
    # picklable closure for process pools
    def __init__(self, problem, n_basis, cfg):
        self.problem, self.n_basis, self.cfg = problem, n_basis, cfg

    def __call__(self, seed):
        return fit(self.problem, self.n_basis, self.cfg, seed)


def convergence_study(
    measured: MeasurementSet,
    xi_list,
    n_basis_list,
    n_runs: int = 20,
    max_iter: int = 10_000,
    master_seed: int = 0,
    cfg: OptimizerConfig | None = None,
    fit_fn=None,
    workers: int | None = None,
) -> StudyReport:
    """Success/failure counts for every ``(xi, n_basis)`` cell.

    A cell succeeds when ``n_runs`` fits converge before ``ceil(n_runs/2)``
    fail. Each attempt is a single fit without restarts. ``fit_fn(xi, n_basis)``
    may supply the per-seed fitting callable (used to inject stubs).
    """
    xi_list, n_basis_list = list(xi_list), list(n_basis_list)
    if not xi_list or not n_basis_list:
        raise ValueError("xi_list and n_basis_list must be nonempty")
    cfg = cfg or OptimizerConfig()
    workers = default_workers() if workers is None else workers
    problem = Problem(measured) if fit_fn is None else None
    cells = []
    index = 0
    for xi in xi_list:
        for nb in n_basis_list:
            if fit_fn is None:
                cell_cfg = replace(cfg, xi=float(xi), max_iter=int(max_iter), max_restarts=0)
                fn = _CellFit(problem, int(nb), cell_cfg)
            else:
                fn = fit_fn(xi, nb)
            cells.append(study_cell(fn, n_runs, master_seed, xi, nb, index, workers))
            index += 1
    return StudyReport(n_runs, cells)


def subsample_study(
    measured: MeasurementSet,
    subsets,
    n_basis: int,
    cfg: OptimizerConfig | None = None,
    n_runs: int = 20,
    master_seed: int = 0,
    omega=None,
    workers: int | None = None,
) -> list:
    """One ensemble per subset of curve indices, all with the same master seed."""
    subsets = [list(s) for s in subsets]
    if not subsets:
        raise ValueError("need at least one subset")
    parts = [measured.subset(s) for s in subsets]
    return [run_ensemble(p, n_basis, cfg, n_runs, master_seed, omega, workers) for p in parts]


def model_spectra(runs, omega) -> np.ndarray:
    """Spectra of fitted runs on ``omega`` (one row per run), floor-width terms removed."""
    return np.array([eval_spectrum(SpectrumModel.from_params(r.theta).resolved(), omega) for r in runs])
