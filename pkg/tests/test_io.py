import json

import numpy as np
import pytest

from gravicat.config import parse_config
from gravicat.errors import ConfigError
from gravicat.experiments import ExperimentReport, run_evolve
from gravicat.field import Grid, Params, WaveFunction
from gravicat.io import (OutputError, OutputLock, emit_outputs, read_potential, read_snapshot,
                         sha256_file, write_potential, write_snapshot)
from gravicat.potentials import Newton1DSoft, PotentialField


def _state(dim=1, n=32):
    g = Grid(dim, n, 8.0)
    rng = np.random.default_rng(1)
    amps = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    amps /= np.sqrt(np.sum(np.abs(amps) ** 2) * g.cell_volume)
    return WaveFunction(g, amps)


@pytest.mark.parametrize("dim, n", [(1, 64), (3, 16)])
def test_snapshot_round_trip_is_bit_exact(tmp_path, dim, n):
    psi = _state(dim, n)
    write_snapshot(tmp_path / "a.wf", psi, "SI")
    back, unit_system = read_snapshot(tmp_path / "a.wf")
    assert unit_system == "SI"
    assert back.grid == psi.grid
    assert np.array_equal(back.amplitudes.view(np.uint64), psi.amplitudes.view(np.uint64))


def test_potential_round_trip(tmp_path):
    g = Grid(1, 64, 8.0)
    field = PotentialField(g, np.random.default_rng(2).normal(size=g.shape))
    write_potential(tmp_path / "v.pot", field)
    back, _ = read_potential(tmp_path / "v.pot")
    assert np.array_equal(back.values, field.values)


def test_snapshot_layout_is_documented(tmp_path):
    psi = _state(1, 16)
    write_snapshot(tmp_path / "a.wf", psi)
    raw = (tmp_path / "a.wf").read_bytes()
    header, payload = raw.split(b"\n", 1)
    assert header.decode().split()[:4] == ["GRAVICAT-WF", "v1", "1", "16"]
    values = np.frombuffer(payload, "<f8")
    assert values[0] == psi.amplitudes[0].real and values[1] == psi.amplitudes[0].imag


def test_wrong_file_kind_is_rejected(tmp_path):
    write_snapshot(tmp_path / "a.wf", _state())
    with pytest.raises(OutputError, match="a.wf"):
        read_potential(tmp_path / "a.wf")
    with pytest.raises(OutputError, match="missing.wf"):
        read_snapshot(tmp_path / "missing.wf")


def _report():
    params = Params.dimensionless()
    g = Grid(1, 128, 32.0)
    return run_evolve(WaveFunction.gaussian(g, 1.0), params, Newton1DSoft(1.0), 0.005, 1.0, 0.1)


def test_emit_outputs_creates_dir_and_checksums(tmp_path):
    rep = _report()
    rc = parse_config("evolve")
    out = tmp_path / "nested" / "run"
    manifest = emit_outputs(rep, out, rc, [("final.wf", rep.extra["final"], "dimensionless")],
                            gnuplot=True, wall_time=1.5)
    assert out.is_dir()
    listed = {f["path"] for f in manifest["files"]}
    assert listed == {"report.json", "trace_evolve.csv", "final.wf", "plot.gp"}
    for entry in manifest["files"]:
        assert sha256_file(out / entry["path"]) == entry["sha256"]
    on_disk = json.loads((out / "manifest.json").read_text())
    assert on_disk["config_sha256"] == rc.digest()
    assert on_disk["wall_time_s"] == 1.5
    assert on_disk["code_version"]
    doc = json.loads((out / "report.json").read_text())
    assert doc["schema"] == "gravicat.report" and doc["schema_version"] == 1
    assert 'using "time":"energy_total"' in (out / "plot.gp").read_text()


def test_same_run_twice_gives_identical_csv_bytes(tmp_path):
    for name in ("a", "b"):
        emit_outputs(_report(), tmp_path / name)
    assert (tmp_path / "a" / "trace_evolve.csv").read_bytes() == \
        (tmp_path / "b" / "trace_evolve.csv").read_bytes()


def test_series_csv_pads_short_columns(tmp_path):
    rep = ExperimentReport("x", {})
    rep.series = {"ell": [6.0, 8.0], "delta_t": [1.0]}
    emit_outputs(rep, tmp_path)
    assert (tmp_path / "series.csv").read_text() == "ell,delta_t\n6,1\n8,\n"


def test_unwritable_directory_names_the_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError, match="file"):
        emit_outputs(ExperimentReport("x", {}), blocker / "sub")


def test_lock_prevents_sharing_an_output_dir(tmp_path):
    with OutputLock(tmp_path / "out"):
        with pytest.raises(ConfigError, match="in use"):
            with OutputLock(tmp_path / "out"):
                pass
    assert not (tmp_path / "out" / ".gravicat.lock").exists()
    with OutputLock(tmp_path / "out"):
        pass
