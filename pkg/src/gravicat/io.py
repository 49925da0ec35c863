"""Files written by runs: snapshots, reports, traces, manifests and plot scripts.

Snapshot layout: one ASCII header line ``GRAVICAT-WF v1 dim n L unit_system``
(``GRAVICAT-POT v1`` for potentials), then little-endian float64 values in
row-major grid order: (re, im) pairs for wavefunctions, plain reals for
potentials. Grid points sit at ``x_j = (j - n/2 + 1/2) L/n`` on every axis.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, GravicatError
from .field import Grid, WaveFunction
from .potentials import PotentialField
from .propagators import format_float

REPORT_SCHEMA = "gravicat.report"
MANIFEST_SCHEMA = "gravicat.manifest"
SCHEMA_VERSION = 1
WF_TAG = "GRAVICAT-WF"
POT_TAG = "GRAVICAT-POT"
LOCK_NAME = ".gravicat.lock"


class OutputError(GravicatError, OSError):
    """Writing or reading a run file failed; the message names the path."""


def _header(tag, grid, unit_system):
    return f"{tag} v1 {grid.dim} {grid.n_points} {grid.box_length!r} {unit_system}\n".encode()


def _write_binary(path, header, data):
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _read_binary(path, tag):
    try:
        with open(path, "rb") as fh:
            header = fh.readline().decode("ascii").split()
            payload = fh.read()
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if len(header) != 6 or header[0] != tag or header[1] != "v1":
        raise OutputError(f"{path}: not a {tag} v1 file")
    grid = Grid(int(header[2]), int(header[3]), float(header[4]))
    return grid, header[5], np.frombuffer(payload, dtype="<f8")


def write_snapshot(path, psi, unit_system="dimensionless"):
    pairs = np.stack([psi.amplitudes.real, psi.amplitudes.imag], axis=-1)
    _write_binary(path, _header(WF_TAG, psi.grid, unit_system), pairs)


def read_snapshot(path):
    """Return ``(WaveFunction, unit_system)``."""
    grid, unit_system, data = _read_binary(path, WF_TAG)
    expected = 2 * grid.n_points**grid.dim
    if data.size != expected:
        raise OutputError(f"{path}: expected {expected} values, found {data.size}")
    pairs = data.reshape(grid.shape + (2,))
    return WaveFunction(grid, pairs[..., 0] + 1j * pairs[..., 1]), unit_system


def write_potential(path, field, unit_system="dimensionless"):
    _write_binary(path, _header(POT_TAG, field.grid, unit_system), field.values)


def read_potential(path):
    grid, unit_system, data = _read_binary(path, POT_TAG)
    if data.size != grid.n_points**grid.dim:
        raise OutputError(f"{path}: wrong number of values")
    return PotentialField(grid, data.reshape(grid.shape).astype(float)), unit_system


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class OutputLock:
    """Exclusive claim on an output directory for the lifetime of one run."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.path = self.directory / LOCK_NAME
        self._fd = None

    def __enter__(self):
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"{self.directory} is in use by another run ({self.path} exists)") \
                from None
        except OSError as exc:
            raise OutputError(f"cannot lock {self.directory}: {exc.strerror or exc}") from exc
        os.write(self._fd, f"{os.getpid()}\n".encode())
        return self

    def __exit__(self, *exc):
        os.close(self._fd)
        self.path.unlink(missing_ok=True)
        return False


def report_document(report):
    doc = {"schema": REPORT_SCHEMA, "schema_version": SCHEMA_VERSION}
    doc.update(report.to_dict())
    return doc


def _write_text(path, text):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def gnuplot_script(trace_files, series_file=None):
    """Plot commands for the emitted CSV files (columns addressed by header name)."""
    lines = ['set datafile separator ","', "set key autotitle columnhead", 'set xlabel "time"']
    for name in trace_files:
        lines += [f'set title "{name}"', 'set ylabel "lobe separation"',
                  f'plot "{name}" using "time":"lobe_separation" with lines', "pause -1",
                  'set ylabel "energy"',
                  f'plot "{name}" using "time":"energy_total" with lines', "pause -1"]
    if series_file:
        lines += [f'set title "{series_file}"', f'plot for [i=2:*] "{series_file}" '
                  'using 1:i with lines', "pause -1"]
    return "\n".join(lines) + "\n"


def series_csv(series):
    """Equal-length series as CSV text; shorter series are padded with empty cells."""
    names = list(series)
    length = max(len(v) for v in series.values())
    rows = [",".join(names)]
    for i in range(length):
        cells = []
        for n in names:
            vals = series[n]
            cells.append(format_float(vals[i]) if i < len(vals) else "")
        rows.append(",".join(cells))
    return "\n".join(rows) + "\n"


def emit_outputs(report, directory, config=None, snapshots=(), gnuplot=False, wall_time=None,
                 version=None):
    """Write report, traces, snapshots and a manifest into ``directory``.

    ``snapshots`` holds ``(file_name, object, unit_system)`` triples with a
    :class:`WaveFunction` or :class:`PotentialField`. Returns the manifest.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {directory}: {exc.strerror or exc}") from exc
    files = []
    report_path = directory / "report.json"
    _write_text(report_path, json.dumps(report_document(report), indent=2, sort_keys=True) + "\n")
    files.append(report_path)
    trace_names = []
    for name, trace in sorted(report.traces.items()):
        path = directory / f"trace_{name}.csv"
        _write_text(path, trace.to_csv())
        files.append(path)
        trace_names.append(path.name)
    series_name = None
    if report.series:
        path = directory / "series.csv"
        _write_text(path, series_csv(report.series))
        files.append(path)
        series_name = path.name
    for name, obj, unit_system in snapshots:
        path = directory / name
        if isinstance(obj, WaveFunction):
            write_snapshot(path, obj, unit_system)
        else:
            write_potential(path, obj, unit_system)
        files.append(path)
    if gnuplot:
        path = directory / "plot.gp"
        _write_text(path, gnuplot_script(trace_names, series_name))
        files.append(path)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "code_version": version or __version__,
        "experiment": report.experiment,
        "passed": report.passed,
        "wall_time_s": wall_time,
        "config_sha256": config.digest() if config is not None else None,
        "config": config.to_ini() if config is not None else None,
        "files": [{"path": p.name, "sha256": sha256_file(p), "bytes": p.stat().st_size}
                  for p in files],
    }
    _write_text(directory / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
