"""CSV and JSON formats read and written by the command-line tool."""
import csv
import hashlib
import json
import os

import numpy as np

from .slgp import Dataset, DensityField


class DataFormatError(ValueError):
    """Malformed or out-of-range input file."""


def read_observations(path):
    """Read a ``x,t`` CSV into a ``Dataset``.

    Raises:
        DataFormatError: on a bad header, unparsable row (with its line
            number), values outside [0, 1] (listing offending lines) or an
            empty file.
    """
    xs, ts, bad = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file")
        if [h.strip() for h in header] != ["x", "t"]:
            raise DataFormatError(f"{path}:1: expected header 'x,t', got {','.join(header)!r}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DataFormatError(f"{path}:{line}: expected 2 columns, got {len(row)}")
            try:
                x, t = float(row[0]), float(row[1])
            except ValueError:
                raise DataFormatError(f"{path}:{line}: cannot parse {','.join(row)!r} as numbers") from None
            if not (0.0 <= x <= 1.0 and 0.0 <= t <= 1.0):
                bad.append(f"line {line} (x={row[0].strip()}, t={row[1].strip()})")
            xs.append(x)
            ts.append(t)
    if bad:
        shown = "; ".join(bad[:20]) + ("; ..." if len(bad) > 20 else "")
        raise DataFormatError(f"{path}: {len(bad)} observation(s) outside [0, 1]: {shown}")
    if not xs:
        raise DataFormatError(f"{path}: no observations")
    return Dataset(np.array(xs), np.array(ts))


def _fmt(v):
    return repr(float(v))


def write_observations(data, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["x", "t"])
    for x, t in zip(data.x, data.t):
        writer.writerow([_fmt(x), _fmt(t)])


def write_field(field, path):
    """Long-format density field: columns ``x,t,density``, x outer, t inner."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "t", "density"])
        for i, x in enumerate(field.x_grid):
            for k, t in enumerate(field.t_grid):
                writer.writerow([_fmt(x), _fmt(t), _fmt(field.values[i, k])])


def read_field(path):
    """Inverse of ``write_field``; rows may come in any order but must fill the grid."""
    try:
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header != ["x", "t", "density"] or arr.shape[1] != 3:
        raise DataFormatError(f"{path}: expected header 'x,t,density'")
    xg, xi = np.unique(arr[:, 0], return_inverse=True)
    tg, ti = np.unique(arr[:, 1], return_inverse=True)
    if arr.shape[0] != xg.size * tg.size:
        raise DataFormatError(f"{path}: rows do not form a full x-t grid")
    values = np.full((xg.size, tg.size), np.nan)
    values[xi, ti] = arr[:, 2]
    if np.isnan(values).any():
        raise DataFormatError(f"{path}: duplicate grid cells")
    return DensityField(xg, tg, values)


def write_curve(x, values, path, name="value"):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", name])
        for a, b in zip(x, values):
            writer.writerow([_fmt(a), _fmt(b)])


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def inventory(paths, root):
    """``{relative path: sha256}`` for the given output files."""
    return {os.path.relpath(p, root): sha256(p) for p in sorted(paths)}
