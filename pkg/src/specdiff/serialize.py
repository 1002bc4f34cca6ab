"""CSV and text-file formats for signals, spectra, priors, and results.

All writers emit deterministic bytes: floats are rendered with repr, rows in
a fixed order, and optional comment headers ('# key: value') carry run
provenance so outputs are reproducible byte for byte under a fixed seed.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .schedule import Schedule
from .spectral import SpectralPrior
from .simulator import HeuristicProfile, RunStats
from .transfer import DPS, TransferTriple, WeightSchedule

__all__ = [
    "write_csv",
    "spectrum_to_csv",
    "signal_to_csv",
    "read_signal_csv",
    "read_samples_csv",
    "schedule_to_csv",
    "triple_to_csv",
    "prior_to_file",
    "prior_from_file",
    "solution_rows",
    "runstats_to_csv",
    "profile_to_csv",
]


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, columns: list[str], rows, header: dict | None = None) -> None:
    """Write rows of scalars with an optional '# key: value' comment header."""
    buf = io.StringIO()
    if header:
        for key, val in header.items():
            buf.write(f"# {key}: {val}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def spectrum_to_csv(vec: np.ndarray, path, header: dict | None = None) -> None:
    vec = np.asarray(vec, dtype=complex)
    rows = [(i, v.real, v.imag) for i, v in enumerate(vec)]
    write_csv(path, ["index", "re", "im"], rows, header)


def signal_to_csv(vec: np.ndarray, path, header: dict | None = None) -> None:
    rows = [(i, float(v)) for i, v in enumerate(np.asarray(vec, dtype=float))]
    write_csv(path, ["index", "value"], rows, header)


def _data_rows(path) -> list[list[str]]:
    lines = [
        ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")
    ]
    return [row for row in csv.reader(lines)]


def read_signal_csv(path) -> np.ndarray:
    rows = _data_rows(path)[1:]
    out = np.empty(len(rows))
    for row in rows:
        out[int(row[0])] = float(row[1])
    return out


def read_samples_csv(path) -> np.ndarray:
    """Long-format sample matrix: columns sample, index, value."""
    rows = _data_rows(path)[1:]
    n = max(int(r[0]) for r in rows) + 1
    d = max(int(r[1]) for r in rows) + 1
    out = np.zeros((n, d))
    for r in rows:
        out[int(r[0]), int(r[1])] = float(r[2])
    return out


def schedule_to_csv(sched: Schedule, path, header: dict | None = None) -> None:
    rows = [(s, float(sched.alpha_bar[s - 1])) for s in range(1, sched.S + 1)]
    write_csv(path, ["s", "alpha_bar"], rows, header)


def triple_to_csv(triple: TransferTriple, path, header: dict | None = None) -> None:
    rows = [
        (
            i,
            triple.D1[i].real,
            triple.D1[i].imag,
            triple.D2[i].real,
            triple.D2[i].imag,
            triple.D3[i].real,
            triple.D3[i].imag,
        )
        for i in range(len(triple.D1))
    ]
    cols = ["bin", "d1_re", "d1_im", "d2_re", "d2_im", "d3_re", "d3_im"]
    write_csv(path, cols, rows, header)


def prior_to_file(prior: SpectralPrior, path, mu_const: float | None = None) -> None:
    """Structured text form: dim, mu_const or inline mu_f, lambda0 list."""
    lines = [f"dim = {prior.dim}"]
    if mu_const is not None:
        lines.append(f"mu_const = {_fmt(mu_const)}")
    else:
        mu = " ".join(_fmt_complex(v) for v in prior.mu_f)
        lines.append(f"mu_f = {mu}")
    lines.append("lambda0 = " + " ".join(_fmt(v) for v in prior.lambda0))
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt_complex(v: complex) -> str:
    return f"{float(v.real)!r}{float(v.imag):+}j"


def prior_from_file(path) -> SpectralPrior:
    entries = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    if "dim" not in entries or "lambda0" not in entries:
        raise ValueError("prior file must define dim and lambda0")
    d = int(entries["dim"])
    lam = np.array([float(v) for v in entries["lambda0"].split()])
    if "mu_f" in entries:
        mu_f = np.array([complex(v) for v in entries["mu_f"].split()])
    else:
        mu_f = np.zeros(d, dtype=complex)
        mu_f[0] = d * float(entries.get("mu_const", "0"))
    return SpectralPrior(dim=d, mu_f=mu_f, lambda0=lam)


def solution_rows(weights: WeightSchedule) -> tuple[list[str], list[tuple]]:
    """Column names and rows for one optimized weight schedule."""
    if weights.kind == DPS:
        return ["s", "zeta"], [(s + 1, float(weights.zeta[s])) for s in range(weights.steps)]
    return ["s", "g", "r"], [
        (s + 1, float(weights.g[s]), float(weights.r[s])) for s in range(weights.steps)
    ]


def runstats_to_csv(stats: RunStats, path, header: dict | None = None) -> None:
    rows = [
        (i, stats.emp_mean[i].real, stats.emp_mean[i].imag, float(stats.emp_var[i]))
        for i in range(len(stats.emp_mean))
    ]
    write_csv(path, ["bin", "emp_mean_re", "emp_mean_im", "emp_var"], rows, header)


def profile_to_csv(profile: HeuristicProfile, path, header: dict | None = None) -> None:
    rows = [
        (s + 1, float(profile.mean[s]), float(profile.std[s]))
        for s in range(len(profile.mean))
    ]
    write_csv(path, ["step", "mean_zeta", "std_zeta"], rows, header)
