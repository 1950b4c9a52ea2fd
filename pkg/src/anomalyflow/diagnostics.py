"""Append-only CSV output of monitor samples, identity audits and Grönwall fits.

Rows are flushed as soon as they are written, so an interrupted run leaves a
readable prefix. Floats use ``repr`` so identical runs give identical files.
"""

from __future__ import annotations

import csv
from fractions import Fraction
from pathlib import Path

from .identities import IdentityEntry
from .monitor import THRESHOLD_CSV_COLUMNS, GronwallFit, MonitorReport

MONITOR_COLUMNS = (
    "time",
    "B",
    "C0",
    "C1",
    "C2",
    "int_G0_p",
    "int_G1_p",
    "int_G2_p",
    "int_G_p",
    "int_Gprime_p",
    "balanced_residual",
    "threshold_thm3_2",
    "threshold_cor4_1",
    "threshold_thm5_1",
    "certificate",
)
IDENTITY_COLUMNS = ("name", "residual", "tolerance", "status", "metric", "note")
GRONWALL_COLUMNS = ("quantity", "p", "Lambda", "envelope_violated", "worst_ratio", "samples")

# series written as two-column plot data, keyed by file stem
PLOT_SERIES = (
    "B",
    "C0",
    "int_G0_p",
    "int_G1_p",
    "int_G2_p",
    "int_G_p",
    "int_Gprime_p",
    "balanced_residual",
    "threshold_thm5_1",
    "min_eigenvalue",
)


def fmt(x) -> str:
    if x is None:
        return "inf"
    if isinstance(x, Fraction):
        x = float(x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def monitor_row(r: MonitorReport) -> dict[str, str]:
    cq = list(r.bounds.Cq) + [0.0] * 2
    ints = r.shi.lp_integrals
    p = r.shi.p
    row = {
        "time": r.t,
        "B": r.bounds.B,
        "C0": r.bounds.C0,
        "C1": cq[0],
        "C2": cq[1],
        "int_G0_p": ints[("G0", p)],
        "int_G1_p": ints[("G1", p)],
        "int_G2_p": ints[("G2", p)],
        "int_G_p": ints[("G", p)],
        "int_Gprime_p": ints[("Gprime", p)],
        "balanced_residual": r.balanced_residual,
        "certificate": r.certificate.verdict,
    }
    for col, entry in THRESHOLD_CSV_COLUMNS.items():
        row[col] = r.thresholds[entry].bound
    return {k: fmt(row[k]) for k in MONITOR_COLUMNS}


def _series_values(r: MonitorReport) -> dict[str, float]:
    row = monitor_row(r)
    out = {k: float(row[k]) for k in PLOT_SERIES if k in row}
    out["min_eigenvalue"] = r.min_eigenvalue
    return out


class _Csv:
    def __init__(self, path: Path, columns):
        self.path = path
        self.columns = tuple(columns)
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(self.columns)
        self._fh.flush()

    def write(self, values) -> None:
        self._w.writerow(values)
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


class DiagnosticsWriter:
    """Owns the CSV files of one output directory."""

    def __init__(self, directory, plot_data: bool = True):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.monitor = _Csv(self.directory / "monitor.csv", MONITOR_COLUMNS)
        self.plot_data = plot_data
        self._plots: dict[str, _Csv] = {}
        self._identities: _Csv | None = None
        self._gronwall: _Csv | None = None

    @property
    def plot_dir(self) -> Path:
        return self.directory / "plot_data"

    def write_monitor(self, r: MonitorReport) -> None:
        row = monitor_row(r)
        self.monitor.write(row[c] for c in MONITOR_COLUMNS)
        if self.plot_data:
            self.plot_dir.mkdir(exist_ok=True)
            for name, value in _series_values(r).items():
                if name not in self._plots:
                    self._plots[name] = _Csv(self.plot_dir / f"{name}.csv", ("t", name))
                self._plots[name].write((fmt(r.t), fmt(value)))

    def write_identity(self, e: IdentityEntry) -> None:
        if self._identities is None:
            self._identities = _Csv(self.directory / "identities.csv", IDENTITY_COLUMNS)
        self._identities.write((e.name, fmt(e.residual), fmt(e.tolerance), e.status, e.metric, e.note))

    def write_gronwall(self, f: GronwallFit) -> None:
        if self._gronwall is None:
            self._gronwall = _Csv(self.directory / "gronwall.csv", GRONWALL_COLUMNS)
        self._gronwall.write(
            (f.name, fmt(f.p), fmt(f.Lambda), str(f.envelope_violated).lower(), fmt(f.worst_ratio), len(f.samples))
        )

    def close(self) -> None:
        for c in [self.monitor, self._identities, self._gronwall, *self._plots.values()]:
            if c is not None:
                c.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_identity_report(directory, entries) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = _Csv(directory / "identities.csv", IDENTITY_COLUMNS)
    for e in entries:
        out.write((e.name, fmt(e.residual), fmt(e.tolerance), e.status, e.metric, e.note))
    out.close()
    return out.path


def read_series(path) -> tuple[list[float], list[float]]:
    """Load a two-column plot-data file."""
    ts, vs = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            if len(row) == 2:
                ts.append(float(row[0]))
                vs.append(float(row[1]))
    return ts, vs
