"""CSV readers and writers for coefficients, grids, datasets and tables.

Floats are written with ``repr`` (shortest round-trip form) so identical
runs produce byte-identical files.
"""

import csv
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .model import Dataset, MuSpec
from .wavelet import CoefficientVector


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_rows(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_coefficients(path, coeffs):
    b = coeffs.basis
    rows = zip(b.labels, b.positions, coeffs.values)
    return write_rows(path, ["l", "r", "value"], rows)


def read_coefficients(path, basis):
    header, rows = read_rows(path)
    if header != ["l", "r", "value"]:
        raise ShapeError(f"unexpected coefficient header {header}")
    values = np.zeros(basis.size)
    seen = np.zeros(basis.size, dtype=bool)
    for l, r, v in rows:
        q = basis.flat_index(int(l), int(r))
        values[q] = float(v)
        seen[q] = True
    if not seen.all():
        raise ShapeError(f"{int((~seen).sum())} coefficients of {basis} missing from {path}")
    return CoefficientVector(values, basis)


def _coord_names(d):
    return ["x"] if d == 1 else ["x1", "x2"]


def write_grid(path, points, value, extra=None):
    """Grid function CSV: ``x,value`` (d=1) or ``x1,x2,value`` (d=2).

    ``extra`` is an optional mapping of further named columns.
    """
    points = np.asarray(points, dtype=float)
    cols = {"value": np.asarray(value, dtype=float).ravel()} if value is not None else {}
    cols.update(extra or {})
    header = _coord_names(points.shape[1]) + list(cols)
    data = [points[:, i] for i in range(points.shape[1])] + [np.asarray(c) for c in cols.values()]
    return write_rows(path, header, zip(*data))


def write_truth(path, truth, points):
    points = np.asarray(points, dtype=float)
    return write_grid(path, points, None, {"f0": truth.f0(points), "w0": truth.w0(points)})


def write_dataset(path, dataset):
    header = [f"x{i + 1}" for i in range(dataset.d)] + ["y"]
    rows = (list(x) + [int(y)] for x, y in zip(dataset.X, dataset.Y))
    return write_rows(path, header, rows)


def read_dataset(path, mu=None):
    header, rows = read_rows(path)
    if not header or header[-1] != "y" or header[:-1] not in (["x1"], ["x1", "x2"]):
        raise ShapeError(f"dataset header {header} is not x1[,x2],y")
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    return Dataset(arr[:, :-1], arr[:, -1].astype(np.int8), MuSpec.from_dict(mu))


def chain_header(basis, index):
    return [f"l{basis.labels[q]}_r{basis.positions[q]}" for q in index]


def write_chain(path, chain):
    return write_rows(path, chain_header(chain.basis, chain.index), chain.draws)
