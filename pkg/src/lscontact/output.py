"""File writers: legacy VTK grids, CSV tables and JSON-lines reports."""

from __future__ import annotations

import csv
import json

import numpy as np


def write_vtk(path, grid, scalars=None, vectors=None, title="lscontact"):
    """Legacy ASCII VTK structured-points file with nodal point data."""
    scalars = scalars or {}
    vectors = vectors or {}
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\nASCII\nDATASET STRUCTURED_POINTS\n")
        fh.write(f"DIMENSIONS {grid.nx} {grid.ny} 1\n")
        fh.write(f"ORIGIN {grid.origin[0]!r} {grid.origin[1]!r} 0\n")
        fh.write(f"SPACING {grid.h!r} {grid.h!r} 1\n")
        fh.write(f"POINT_DATA {grid.n_nodes}\n")
        for name, v in scalars.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, np.asarray(v, float).reshape(-1), fmt="%.10g")
        for name, v in vectors.items():
            v = np.asarray(v, float).reshape(-1, 2)
            fh.write(f"VECTORS {name} double\n")
            np.savetxt(fh, np.column_stack([v, np.zeros(len(v))]), fmt="%.10g")


def write_table(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def append_jsonl(path, record):
    with open(path, "a") as fh:
        fh.write(json.dumps(_plain(record)) + "\n")


def stress_invariants(stress):
    """Mean stress, maximum principal stress and von Mises (plane) of Voigt rows."""
    sxx, syy, sxy = stress[..., 0], stress[..., 1], stress[..., 2]
    mean = 0.5 * (sxx + syy)
    rad = np.sqrt((0.5 * (sxx - syy)) ** 2 + sxy ** 2)
    vm = np.sqrt(sxx ** 2 - sxx * syy + syy ** 2 + 3 * sxy ** 2)
    return mean, mean + rad, vm


def splat_to_nodes(grid, x, values, weights):
    """Weighted bilinear average of point values onto grid nodes (NaN where empty)."""
    from .mechanics import shape_functions
    cells, local = grid.locate(x)
    nodes = grid.cell_nodes(cells)
    w = shape_functions(local) * weights[:, None]
    values = np.asarray(values, float).reshape(len(x), -1)
    num = np.zeros((grid.n_nodes, values.shape[1]))
    den = np.bincount(nodes.ravel(), weights=w.ravel(), minlength=grid.n_nodes)
    for c in range(values.shape[1]):
        num[:, c] = np.bincount(nodes.ravel(), weights=(w * values[:, c][:, None]).ravel(),
                                minlength=grid.n_nodes)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / den[:, None]
    out[den == 0] = np.nan
    return out.reshape(grid.ny, grid.nx, -1)
