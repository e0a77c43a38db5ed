"""CSV and JSON writers.  Floats are written with ``repr`` (shortest round-trip form)."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def write_rows(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_rows(path):
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [[float(x) for x in row] for row in r]


def write_trace_csv(trace, path):
    t, e, d, r = trace.arrays()
    return write_rows(path, ["t", "energy", "dissipation", "residual"], zip(t, e, d, r))


def write_state_csv(state, x, grid, stem):
    """``<stem>.csv`` with x,u,v,y,z and ``<stem>_omega.csv`` with xi,omega."""
    stem = Path(stem)
    main = write_rows(
        stem.parent / (stem.name + ".csv"),
        ["x", "u", "v", "y", "z"],
        zip(x, state.u, state.v, state.y, state.z),
    )
    om = write_rows(
        stem.parent / (stem.name + "_omega.csv"),
        ["xi", "omega"],
        zip(grid.nodes, state.channels.omega[0]),
    )
    return main, om


def write_json(obj, path):
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path
