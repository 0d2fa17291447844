"""Manifest / curve-file formats and deterministic writers for every result type.

Curve files are comma-separated with ``#`` comment lines and a header row
``t,C`` (optionally ``,sigma``). A manifest is JSON::

    {"format_version": 1, "omega0_hz": null,
     "curves": [{"path": "FID.csv", "sequence": {"n_pulses": 0}, "label": "FID"}]}

When ``omega0_hz`` is set, curve times are in seconds and are multiplied by
``omega0_hz`` on load; spectra written next to such data carry frequencies in
s^-1 (``omega * omega0_hz``) and densities in s (``S / omega0_hz``).
"""
from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .measurements import CoherenceCurve, MeasurementSet
from .spectra import PulseSequence

FORMAT_VERSION = 1


class FormatError(ValueError):
    """A malformed input file; the message names the file, line and column."""


def fmt(x) -> str:
    """17 significant digits, the shortest width that round-trips a double."""
    return format(float(x), ".17g")


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"could not write {path}: {exc}") from exc
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _round_floats(obj):
    # floats go through fmt so JSON output is independent of repr quirks
    if isinstance(obj, float):
        return float(fmt(obj))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(fmt(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> Path:
    text = json.dumps(_round_floats(obj), indent=2, sort_keys=True, default=_json_default, allow_nan=False)
    return atomic_write(path, text + "\n")


def write_csv(path, header, columns, comments=()) -> Path:
    columns = [np.asarray(c, dtype=float) for c in columns]
    n = columns[0].size
    if any(c.size != n for c in columns):
        raise ValueError("all columns must have the same length")
    buf = _io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    buf.write(",".join(header) + "\n")
    for i in range(n):
        buf.write(",".join(fmt(c[i]) for c in columns) + "\n")
    return atomic_write(path, buf.getvalue())


def read_csv(path):
    """Return ``(header, rows)`` with rows as ``(line_number, values)`` pairs; raises ``FormatError``."""
    path = Path(path)
    header = None
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            cells = [c.strip() for c in next(csv.reader([stripped]))]
            if header is None:
                header = cells
                continue
            if len(cells) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} columns, got {len(cells)}")
            row = []
            for col, cell in enumerate(cells, start=1):
                try:
                    row.append(float(cell))
                except ValueError:
                    raise FormatError(f"{path}:{lineno}:{col}: not a number: {cell!r}") from None
            rows.append((lineno, row))
    if header is None:
        raise FormatError(f"{path}: no header row")
    return header, rows


def read_curve(path, seq, label="", time_scale=1.0) -> CoherenceCurve:
    header, rows = read_csv(path)
    names = [h.lower() for h in header]
    if names[:2] != ["t", "c"] or len(names) > 3 or (len(names) == 3 and names[2] != "sigma"):
        raise FormatError(f"{path}:1: header must be 't,C' or 't,C,sigma', got {','.join(header)}")
    if len(rows) < 2:
        raise FormatError(f"{path}: a curve needs at least two rows")
    prev = None
    for lineno, row in rows:
        t, c = row[0], row[1]
        if not (np.isfinite(t) and np.isfinite(c)):
            raise FormatError(f"{path}:{lineno}: non-finite value")
        if prev is not None and t <= prev:
            raise FormatError(f"{path}:{lineno}:1: times must be strictly increasing ({t!r} after {prev!r})")
        if not 0.0 <= c <= 1.0:
            raise FormatError(f"{path}:{lineno}:2: coherence {c!r} outside [0, 1]")
        if len(row) == 3 and not row[2] >= 0:
            raise FormatError(f"{path}:{lineno}:3: sigma must be nonnegative")
        prev = t
    data = np.array([r for _, r in rows])
    sigma = data[:, 2] if data.shape[1] == 3 else None
    return CoherenceCurve(seq, data[:, 0] * time_scale, data[:, 1], sigma, label)


def write_curve(path, curve: CoherenceCurve, time_scale=1.0, comments=()) -> Path:
    header = ["t", "C"]
    cols = [curve.times / time_scale, curve.values]
    if curve.sigma is not None:
        header.append("sigma")
        cols.append(curve.sigma)
    return write_csv(path, header, cols, [f"sequence: {curve.seq.name}", *comments])


def parse_manifest(path) -> MeasurementSet:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise FormatError(f"{path}: manifest must be a JSON object")
    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unknown format_version {version!r} (expected {FORMAT_VERSION})")
    omega0 = raw.get("omega0_hz")
    if omega0 is not None and not (isinstance(omega0, (int, float)) and omega0 > 0):
        raise FormatError(f"{path}: omega0_hz must be a positive number")
    curves_raw = raw.get("curves")
    if not isinstance(curves_raw, list) or not curves_raw:
        raise FormatError(f"{path}: 'curves' must be a nonempty list")
    scale = float(omega0) if omega0 is not None else 1.0
    curves = []
    for i, entry in enumerate(curves_raw):
        try:
            rel = entry["path"]
            n = entry["sequence"]["n_pulses"]
        except (KeyError, TypeError):
            raise FormatError(f"{path}: curve {i} needs 'path' and 'sequence.n_pulses'") from None
        if not isinstance(n, int) or n < 0:
            raise FormatError(f"{path}: curve {i}: n_pulses must be a nonnegative integer")
        cpath = (path.parent / rel).resolve()
        if not cpath.is_file():
            raise FileNotFoundError(f"{path}: curve {i} path does not resolve: {cpath}")
        curves.append(read_curve(cpath, PulseSequence(n), entry.get("label", ""), scale))
    return MeasurementSet(tuple(curves), float(omega0) if omega0 is not None else None, raw.get("notes", ""))


def write_measurements(measured: MeasurementSet, out_dir, notes="") -> Path:
    """Write one CSV per curve plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    scale = measured.omega0_hz or 1.0
    entries = []
    used = set()
    for curve in measured:
        stem = curve.label or curve.seq.name
        name = f"{stem}.csv"
        k = 1
        while name in used:
            k += 1
            name = f"{stem}_{k}.csv"
        used.add(name)
        write_curve(out_dir / name, curve, scale)
        entries.append({"path": name, "sequence": {"n_pulses": curve.seq.n_pulses}, "label": curve.label})
    manifest = {
        "format_version": FORMAT_VERSION,
        "omega0_hz": measured.omega0_hz,
        "curves": entries,
        "notes": notes or measured.notes,
    }
    return write_json(out_dir / "manifest.json", manifest)


def _phys(omega, values, omega0_hz):
    if omega0_hz is None:
        return omega, values
    return omega * omega0_hz, [v / omega0_hz for v in values]


def run_record(k, run) -> dict:
    return {
        "index": k,
        "seed": run.seed,
        "converged": bool(run.converged),
        "final_loss": run.final_loss,
        "iterations": run.iterations,
        "restarts_used": run.restarts_used,
        "theta": np.asarray(run.theta).tolist(),
        "loss_history": [np.asarray(h).tolist() for h in run.loss_history],
    }


def write_ensemble(result, out_dir, config: dict, omega0_hz=None) -> list:
    """``spectrum.csv``, ``runs.json``, ``report.json`` and ``timing.json``.

    Wall times go to ``timing.json`` only, so the other three files are
    byte-identical across reruns.
    """
    out_dir = Path(out_dir)
    omega, (mean, std) = _phys(result.omega, [result.mean, result.std], omega0_hz)
    unit = "omega0 units" if omega0_hz is None else "s^-1 (density in s)"
    paths = [write_csv(out_dir / "spectrum.csv", ["omega", "mean", "std"], [omega, mean, std],
                       [f"frequency unit: {unit}", "std: population standard deviation over converged runs"])]
    paths.append(write_json(out_dir / "runs.json", {"runs": [run_record(k, r) for k, r in enumerate(result.runs)]}))
    report = {
        "config": config,
        "n_runs": len(result.runs),
        "converged_runs": len(result.converged_runs),
        "failures": result.failures,
        "omega0_hz": omega0_hz,
        "timing_file": "timing.json",
    }
    paths.append(write_json(out_dir / "report.json", report))
    paths.append(write_json(out_dir / "timing.json", {"wall_time": [r.wall_time for r in result.runs]}))
    return paths


def write_sensitivity(report, out_dir, omega0_hz=None) -> list:
    out_dir = Path(out_dir)
    curves = list(report.curves) + list(report.candidate_curves)
    omega = report.omega if omega0_hz is None else report.omega * omega0_hz
    header = ["omega"] + [f"G_{c.seq.name}" for c in report.curves] + ["sum"]
    cols = [omega] + [c.G for c in report.curves] + [report.total]
    header += [f"G_candidate_{c.seq.name}" for c in report.candidate_curves]
    cols += [c.G for c in report.candidate_curves]
    paths = [write_csv(out_dir / "sensitivity.csv", header, cols, ["G in time^3 units of 1/omega0"])]
    coverage = {
        "fraction": report.fraction,
        "t_f": {c.seq.name: c.t_f for c in curves},
        "flagged_regions": [list(r) for r in report.regions],
        "flagged_points": int(np.sum(report.flagged)),
        "scores": {str(k): v for k, v in report.scores.items()},
        "ranking": report.ranking,
        "recommended": report.recommended,
    }
    paths.append(write_json(out_dir / "coverage.json", coverage))
    return paths


def write_study(report, out_dir) -> list:
    out_dir = Path(out_dir)
    cells = report.cells
    paths = [write_csv(
        out_dir / "study.csv",
        ["xi", "n_basis", "successes", "failures", "success"],
        [[c.xi for c in cells], [c.n_basis for c in cells], [c.successes for c in cells],
         [c.failures for c in cells], [int(c.success) for c in cells]],
        [f"n_runs: {report.n_runs}", "success: n_runs successes before ceil(n_runs/2) failures"],
    )]
    paths.append(write_json(out_dir / "timing.json", {
        "cells": [{"xi": c.xi, "n_basis": c.n_basis, "wall_time": c.wall_time} for c in cells]
    }))
    return paths


def write_outputs(result, out_dir, **kwargs) -> list:
    """Dispatch on the result type (ensemble, sensitivity report or study)."""
    from .ensemble import EnsembleResult, StudyReport
    from .sensitivity import CoverageReport

    if isinstance(result, EnsembleResult):
        return write_ensemble(result, out_dir, kwargs.get("config", {}), kwargs.get("omega0_hz"))
    if isinstance(result, CoverageReport):
        return write_sensitivity(result, out_dir, kwargs.get("omega0_hz"))
    if isinstance(result, StudyReport):
        return write_study(result, out_dir)
    raise TypeError(f"no writer for {type(result).__name__}")
