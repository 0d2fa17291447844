"""Variational reconstruction of dephasing noise spectra from coherence decays.

A spectrum is modelled as a sum of symmetrized Lorentzians whose parameters are
fitted, with projected Adam/AdamW, to coherence curves measured under FID and
CPMG pulse sequences. Frequencies are in units of a reference ``omega0`` and
times in ``1/omega0``.
"""
from .attenuation import (
    QuadratureConfig,
    attenuation,
    chi_cpmg_analytic,
    chi_fid_closed,
    chi_quadrature,
    coherence,
)
from .ensemble import EnsembleResult, StudyReport, convergence_study, run_ensemble, subsample_study
from .measurements import CoherenceCurve, MeasurementSet, derive_seed
from .optimizer import PRESETS, OptimizerConfig, RunResult, fit, init_params, preset
from .sensitivity import coverage_report, sensitivity_curve
from .spectra import LorentzianTerm, PulseSequence, SpectrumModel, eval_spectrum, filter_function
from .synth import (
    AnalyticSpectrum,
    NoiseSpec,
    canonical_spectrum,
    eval_analytic,
    ou_oracle,
    ou_paths,
    simulate_measurements,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticSpectrum", "CoherenceCurve", "EnsembleResult", "LorentzianTerm", "MeasurementSet",
    "NoiseSpec", "OptimizerConfig", "PRESETS", "PulseSequence", "QuadratureConfig", "RunResult",
    "SpectrumModel", "StudyReport", "attenuation", "canonical_spectrum", "chi_cpmg_analytic",
    "chi_fid_closed", "chi_quadrature", "coherence", "convergence_study", "coverage_report",
    "derive_seed", "eval_analytic", "eval_spectrum", "filter_function", "fit", "init_params",
    "ou_oracle", "ou_paths", "preset", "run_ensemble", "sensitivity_curve", "simulate_measurements",
    "subsample_study",
]
