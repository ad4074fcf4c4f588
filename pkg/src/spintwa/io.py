"""CSV and JSON output.

CSV files follow RFC 4180 (comma separated, CRLF line ends, minimal
quoting).  Floats are written with ``repr`` so they round-trip exactly;
missing values are written as ``nan``.  Simulation and oracle series share
one schema, with zero error columns for exact results.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

AXES = ("x", "y", "z")
SECOND = ("xx", "yy", "zz", "xy", "xz", "yz")
_SECOND_IDX = {"xx": (0, 0), "yy": (1, 1), "zz": (2, 2), "xy": (0, 1), "xz": (0, 2), "yz": (1, 2)}


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def write_atomic(path, data) -> Path:
    """Write ``data`` (str or bytes) to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    return write_atomic(path, csv_text(header, rows))


def read_csv(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def write_json(path, obj) -> Path:
    return write_atomic(path, json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


# -- observable series ---------------------------------------------------------


def series_header(squeezing: bool = False) -> list:
    head = ["time", "site", "n_traj"]
    for a in AXES:
        head += [f"s{a}", f"s{a}_err"]
    for p in SECOND:
        head += [f"s{p}", f"s{p}_err"]
    for a in AXES:
        head += [f"var_{a}", f"var_{a}_err"]
    if squeezing:
        head += ["xi2", "xi2_err", "xi2_reliable"]
    return head


def series_rows(series, squeeze=None):
    """Rows for an :class:`~spintwa.observables.ObservableSeries`, one per (time, site)."""
    for ti, t in enumerate(series.times):
        for n in range(series.n_sites):
            row = [t, n, int(series.n_traj[ti])]
            for a in range(3):
                row += [series.mean[ti, n, a], series.mean_err[ti, n, a]]
            for p in SECOND:
                i, j = _SECOND_IDX[p]
                row += [series.second[ti, n, i, j], series.second_err[ti, n, i, j]]
            for a in range(3):
                row += [series.variance[ti, n, a], series.variance_err[ti, n, a]]
            if squeeze is not None:
                row += [squeeze.xi2[ti, n], squeeze.err[ti, n], bool(squeeze.reliable[ti, n])]
            yield row


def write_series(path, series, squeeze=None) -> Path:
    return write_csv(path, series_header(squeeze is not None), series_rows(series, squeeze))


def write_correlations(path, profile) -> Path:
    rows = []
    for ti, t in enumerate(profile.times):
        for si, s in enumerate(profile.separations):
            rows.append([t, int(s), profile.c[ti, si], profile.c_err[ti, si],
                         profile.xi_corr[ti], profile.residual[ti]])
    return write_csv(path, ["time", "separation", "c", "c_err", "xi_corr", "fit_residual"], rows)
