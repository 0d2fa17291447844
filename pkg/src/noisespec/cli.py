"""Command-line entry point: simulate, fit, sensitivity, benchmark, subsample, replay.

Every command writes ``config.json`` into its output directory; ``noisespec
replay <config.json>`` reruns it and reproduces the numeric outputs byte for
byte. Errors are reported on stderr as one JSON object and exit with status 1;
usage errors exit with status 2.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as nio
from .ensemble import convergence_study, default_workers, run_ensemble, subsample_study
from .measurements import MeasurementSet
from .optimizer import PRESETS, preset
from .sensitivity import coverage_report
from .spectra import SpectrumModel, concat_models
from .synth import BUILTIN_SPECTRA, AnalyticSpectrum, NoiseSpec, simulate_measurements

CONFIG_NAME = "config.json"


class UsageError(Exception):
    pass


def int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list is empty")
    return values


def float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list is empty")
    return values


def subsets_arg(text):
    return [int_list(part) for part in text.split(";") if part.strip()]


def tf_map(text):
    out = {}
    for item in text.split(","):
        try:
            k, v = item.split(":")
            out[int(k)] = float(v)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected N:t_f pairs, got {item!r}") from None
    return out


def parse_grid(text) -> np.ndarray:
    """``lo:hi:n`` (uniform) or ``log:lo:hi:n`` (log-spaced)."""
    parts = text.split(":")
    try:
        if parts[0] == "log":
            lo, hi, n = float(parts[1]), float(parts[2]), int(parts[3])
            if lo <= 0:
                raise ValueError
            return np.geomspace(lo, hi, n)
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"grid must be lo:hi:n or log:lo:hi:n, got {text!r}") from None
    if n < 2 or hi <= lo:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}")
    return np.linspace(lo, hi, n)


def grid_text(text):
    parse_grid(text)
    return text


def load_spectrum(ref: str) -> AnalyticSpectrum:
    if ref in BUILTIN_SPECTRA:
        return BUILTIN_SPECTRA[ref]()
    path = Path(ref)
    if not path.is_file():
        raise FileNotFoundError(f"spectrum {ref!r} is neither a builtin ({', '.join(sorted(BUILTIN_SPECTRA))}) nor a file")
    return AnalyticSpectrum.from_dict(json.loads(path.read_text()))


def mean_model_from_fit(fit_dir) -> SpectrumModel:
    """The ensemble-mean spectrum of a ``fit`` output as one Lorentzian sum."""
    fit_dir = Path(fit_dir)
    runs = json.loads((fit_dir / "runs.json").read_text())["runs"]
    good = [r for r in runs if r["converged"]]
    if not good:
        raise ValueError(f"{fit_dir}: no converged runs")
    parts = [SpectrumModel.from_params(r["theta"]).resolved().scaled(1.0 / len(good)) for r in good]
    return concat_models(parts)


def _config(args, keys) -> dict:
    return {"command": args.command, "args": {k: getattr(args, k) for k in keys}}


def _optimizer_cfg(args):
    overrides = {"xi": args.xi}
    if args.max_iter is not None:
        overrides["max_iter"] = args.max_iter
    if args.max_restarts is not None:
        overrides["max_restarts"] = args.max_restarts
    return preset(args.preset, **overrides)


def cmd_simulate(args):
    spec = load_spectrum(args.spectrum)
    measured = simulate_measurements(
        spec, args.pulses, NoiseSpec(args.noise, args.seed), args.downsample, points=args.points,
    )
    if args.omega0_hz is not None:
        measured = MeasurementSet(measured.curves, args.omega0_hz)
    out = Path(args.out)
    nio.write_measurements(measured, out, notes=f"simulated from {args.spectrum}")
    nio.write_json(out / "true_spectrum.json", spec.to_dict())
    return _config(args, ["spectrum", "pulses", "points", "noise", "seed", "downsample", "omega0_hz"])


def cmd_fit(args):
    measured = nio.parse_manifest(args.manifest)
    cfg = _optimizer_cfg(args)
    grid = parse_grid(args.grid)
    result = run_ensemble(measured, args.nbasis, cfg, args.nruns, args.seed, grid, args.workers)
    config = _config(args, ["manifest", "nbasis", "xi", "nruns", "preset", "seed", "grid", "max_iter", "max_restarts"])
    config["optimizer"] = cfg.to_dict()
    nio.write_ensemble(result, args.out, config, measured.omega0_hz)
    return config


def cmd_sensitivity(args):
    if (args.spectrum_from is None) == (args.spectrum is None):
        raise UsageError("give exactly one of --spectrum-from or --spectrum")
    if args.spectrum_from is not None:
        spectrum = mean_model_from_fit(args.spectrum_from)
    else:
        spec = load_spectrum(args.spectrum)
        spectrum = spec.model if spec.kind == "lorentzian-sum" else spec
    report = coverage_report(
        spectrum, args.sequences, parse_grid(args.grid), args.candidates or (),
        t_f=args.tf_list, fraction=args.fraction,
    )
    nio.write_sensitivity(report, args.out)
    return _config(args, ["spectrum_from", "spectrum", "sequences", "candidates", "tf_list", "fraction", "grid"])


def cmd_benchmark(args):
    measured = nio.parse_manifest(args.manifest)
    cfg = preset(args.preset)
    report = convergence_study(
        measured, args.xi_list, args.nbasis_list, args.nruns, args.max_iter, args.seed, cfg,
        workers=args.workers,
    )
    nio.write_study(report, args.out)
    config = _config(args, ["manifest", "xi_list", "nbasis_list", "nruns", "max_iter", "preset", "seed"])
    config["optimizer"] = cfg.to_dict()
    return config


def cmd_subsample(args):
    measured = nio.parse_manifest(args.manifest)
    cfg = _optimizer_cfg(args)
    grid = parse_grid(args.grid)
    results = subsample_study(measured, args.subsets, args.nbasis, cfg, args.nruns, args.seed, grid, args.workers)
    config = _config(args, ["manifest", "subsets", "nbasis", "xi", "nruns", "preset", "seed", "grid", "max_iter", "max_restarts"])
    config["optimizer"] = cfg.to_dict()
    for k, (subset, res) in enumerate(zip(args.subsets, results)):
        sub = dict(config, subset=subset)
        nio.write_ensemble(res, Path(args.out) / f"subset_{k}", sub, measured.omega0_hz)
    return config


def _add_fit_flags(p, with_runs=True):
    p.add_argument("--manifest", required=True)
    p.add_argument("--nbasis", type=int, default=3)
    p.add_argument("--xi", type=float, default=1e-5)
    p.add_argument("--preset", choices=sorted(PRESETS), default="fig2")
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--max-restarts", type=int, default=None)
    if with_runs:
        p.add_argument("--nruns", type=int, default=20)
    p.add_argument("--grid", type=grid_text, default="0:20:1001", help="lo:hi:n or log:lo:hi:n in omega0 units")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisespec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (default from NOISESPEC_WORKERS, else 1)")

    p = sub.add_parser("simulate", help="simulate coherence curves from a known spectrum")
    p.add_argument("--spectrum", default="canonical", help="builtin name or spectrum JSON file")
    p.add_argument("--pulses", type=int_list, default=[0, 1, 2, 3, 8, 16, 32])
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--noise", type=float, default=0.0, help="half-width of uniform noise")
    p.add_argument("--downsample", type=int, default=None)
    p.add_argument("--omega0-hz", type=float, default=None, help="write times in seconds for this omega0")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="ensemble reconstruction from a manifest")
    _add_fit_flags(p)
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sensitivity", help="sensitivity curves and coverage ranking")
    p.add_argument("--spectrum-from", default=None, help="fit output directory")
    p.add_argument("--spectrum", default=None, help="builtin name or spectrum JSON file")
    p.add_argument("--sequences", type=int_list, required=True)
    p.add_argument("--candidates", type=int_list, default=None)
    p.add_argument("--tf-list", type=tf_map, default=None, help="N:t_f pairs, e.g. 0:3,1:4")
    p.add_argument("--fraction", type=float, default=0.05)
    p.add_argument("--grid", type=grid_text, default="0:20:1001")
    common(p)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("benchmark", help="convergence study over xi and basis size")
    p.add_argument("--manifest", required=True)
    p.add_argument("--xi-list", type=float_list, required=True)
    p.add_argument("--nbasis-list", type=int_list, required=True)
    p.add_argument("--nruns", type=int, default=20)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--preset", choices=sorted(PRESETS), default="fig2")
    common(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("subsample", help="one ensemble per subset of curves")
    _add_fit_flags(p)
    p.add_argument("--subsets", type=subsets_arg, required=True, help="e.g. '0,1,2;3,4'")
    common(p)
    p.set_defaults(func=cmd_subsample)

    p = sub.add_parser("replay", help="rerun a command from its config.json")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="output directory (default: the original)")
    p.set_defaults(func=None)
    return parser


def _to_argv(config: dict, out) -> list:
    args = config["args"]
    argv = [config["command"]]
    for key, value in args.items():
        if value is None or key == "seed":
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(value, dict):
            value = ",".join(f"{k}:{v!r}" for k, v in value.items())
        elif isinstance(value, list) and value and isinstance(value[0], list):
            value = ";".join(",".join(str(x) for x in part) for part in value)
        elif isinstance(value, list):
            value = ",".join(repr(x) if isinstance(x, float) else str(x) for x in value)
        elif isinstance(value, float):
            value = repr(value)
        argv += [flag, str(value)]
    argv += ["--seed", str(config["seed"]), "--out", str(out)]
    return argv


def _echo(args, config):
    config = dict(config)
    config["seed"] = args.seed
    config["format_version"] = 1
    nio.write_json(Path(args.out) / CONFIG_NAME, config)


def run(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        config = json.loads(Path(args.config).read_text())
        out = args.out or Path(args.config).parent
        return run(_to_argv(config, out))
    if getattr(args, "workers", None) is None:
        args.workers = default_workers()
    # echo absolute paths so a config replays from any directory
    for key in ("manifest", "spectrum_from"):
        if getattr(args, key, None) is not None:
            setattr(args, key, str(Path(getattr(args, key)).resolve()))
    if getattr(args, "spectrum", None) is not None and args.spectrum not in BUILTIN_SPECTRA:
        args.spectrum = str(Path(args.spectrum).resolve())
    try:
        config = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"noisespec {args.command}: error: {exc}", file=sys.stderr)
        return 2
    _echo(args, config)
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception as exc:  # reported as a machine-readable record
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
