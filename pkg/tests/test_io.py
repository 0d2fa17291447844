import json

import numpy as np
import pytest

from noisespec import io as nio
from noisespec.ensemble import EnsembleResult, StudyCell, StudyReport
from noisespec.measurements import CoherenceCurve, MeasurementSet
from noisespec.optimizer import RunResult

def table(path):
    header, rows = nio.read_csv(path)
    return header, [r for _, r in rows]


def values(path):
    return table(path)[1]



def sample_set(omega0_hz=None):
    t = np.linspace(0, 2, 7)
    curves = (
        CoherenceCurve(0, t, np.exp(-t) * 0.999),
        CoherenceCurve(1, t, np.exp(-t / 3), sigma=np.full(7, 0.01)),
        CoherenceCurve(32, t, np.exp(-t / 7)),
    )
    return MeasurementSet(curves, omega0_hz)


def test_fmt_roundtrips_exactly():
    for x in [0.1, 1 / 3, np.pi * 1e-200, 2.0**-1074, 1e300]:
        assert float(nio.fmt(x)) == x


@pytest.mark.parametrize("omega0_hz", [None, 2.5e6])
def test_manifest_roundtrip_is_identity(tmp_path, omega0_hz):
    ms = sample_set(omega0_hz)
    path = nio.write_measurements(ms, tmp_path)
    back = nio.parse_manifest(path)
    assert back.omega0_hz == omega0_hz
    assert back.pulse_numbers() == [0, 1, 32]
    for a, b in zip(ms, back):
        np.testing.assert_allclose(b.times, a.times, rtol=1e-15, atol=0)
        np.testing.assert_array_equal(b.values, a.values)
        assert b.label == a.label
    assert back[1].sigma is not None and back[0].sigma is None


def test_hz_files_hold_seconds(tmp_path):
    nio.write_measurements(sample_set(1e3), tmp_path)
    rows = values(tmp_path / "FID.csv")
    assert rows[-1][0] == pytest.approx(2.0 / 1e3)


def test_out_of_range_coherence_names_row(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("# comment\nt,C\n0,1\n1,1.2\n")
    with pytest.raises(nio.FormatError, match=r"c.csv:4:2: coherence 1.2"):
        nio.read_curve(p, 0)


def test_unsorted_and_malformed(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("t,C\n0,1\n2,0.5\n1,0.4\n")
    with pytest.raises(nio.FormatError, match="strictly increasing"):
        nio.read_curve(p, 0)
    p.write_text("t,C\n0,1\n1,abc\n")
    with pytest.raises(nio.FormatError, match=r":3:2:"):
        nio.read_curve(p, 0)
    p.write_text("time,coh\n0,1\n1,0.5\n")
    with pytest.raises(nio.FormatError, match="header"):
        nio.read_curve(p, 0)


def test_manifest_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        nio.parse_manifest(tmp_path / "none.json")
    m = tmp_path / "manifest.json"
    m.write_text(json.dumps({"format_version": 1, "curves": [{"path": "gone.csv", "sequence": {"n_pulses": 1}}]}))
    with pytest.raises(FileNotFoundError, match="does not resolve"):
        nio.parse_manifest(m)
    m.write_text(json.dumps({"format_version": 7, "curves": []}))
    with pytest.raises(nio.FormatError, match="unknown format_version"):
        nio.parse_manifest(m)
    m.write_text("{bad json")
    with pytest.raises(nio.FormatError, match=r"manifest.json:1:"):
        nio.parse_manifest(m)
    (tmp_path / "a.csv").write_text("t,C\n0,1\n1,0.5\n")
    m.write_text(json.dumps({"format_version": 1, "curves": [{"path": "a.csv", "sequence": {"n_pulses": -1}}]}))
    with pytest.raises(nio.FormatError, match="n_pulses"):
        nio.parse_manifest(m)


def fake_result(n_runs=2):
    runs = [RunResult(np.array([1.0, 0.5 * k, 1.0]), 1e-6, 10, 0, True, k, 0.1 * k, [np.array([1.0, 1e-6])])
            for k in range(n_runs)]
    runs.append(RunResult(np.array([2.0, 0.0, 1.0]), 1.0, 10, 1, False, 9, 0.3, [np.ones(3), np.ones(3)]))
    omega = np.linspace(0, 2, 5)
    spectra = np.array([r.model()(omega) for r in runs[:n_runs]])
    return EnsembleResult(omega, spectra.mean(0), spectra.std(0), runs, 3, spectra)


def test_ensemble_files_schema(tmp_path):
    paths = nio.write_ensemble(fake_result(), tmp_path, {"command": "fit"})
    assert sorted(p.name for p in paths) == ["report.json", "runs.json", "spectrum.csv", "timing.json"]
    header, rows = table(tmp_path / "spectrum.csv")
    assert header == ["omega", "mean", "std"] and len(rows) == 5
    report = json.loads((tmp_path / "report.json").read_text())
    runs = json.loads((tmp_path / "runs.json").read_text())["runs"]
    assert report["converged_runs"] == sum(r["converged"] for r in runs) == 2
    assert report["failures"] == 3
    assert set(runs[0]) == {"index", "seed", "converged", "final_loss", "iterations", "restarts_used", "theta", "loss_history"}
    assert "wall_time" not in (tmp_path / "report.json").read_text()


def test_single_run_std_column_zero(tmp_path):
    res = fake_result(1)
    nio.write_ensemble(res, tmp_path, {})
    rows = values(tmp_path / "spectrum.csv")
    assert all(r[2] == 0.0 for r in rows)


def test_writes_are_byte_identical(tmp_path):
    nio.write_ensemble(fake_result(), tmp_path / "a", {"x": 0.1})
    nio.write_ensemble(fake_result(), tmp_path / "b", {"x": 0.1})
    for name in ["spectrum.csv", "runs.json", "report.json"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_physical_units(tmp_path):
    nio.write_ensemble(fake_result(), tmp_path, {}, omega0_hz=10.0)
    rows = values(tmp_path / "spectrum.csv")
    res = fake_result()
    assert rows[-1][0] == pytest.approx(20.0)
    assert rows[-1][1] == pytest.approx(res.mean[-1] / 10.0)


def test_study_csv(tmp_path):
    rep = StudyReport(4, [StudyCell(1e-5, 3, 4, 0, 1.0, True), StudyCell(1e-4, 1, 1, 2, 2.0, False)])
    nio.write_outputs(rep, tmp_path)
    header, rows = table(tmp_path / "study.csv")
    assert header == ["xi", "n_basis", "successes", "failures", "success"]
    assert rows == [[1e-5, 3, 4, 0, 1], [1e-4, 1, 1, 2, 0]]
    with pytest.raises(TypeError):
        nio.write_outputs(object(), tmp_path)


def test_unwritable_path_reports_context(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        nio.write_json(blocker / "sub" / "a.json", {})
