"""Material points and moving-least-squares transfer of their stresses."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .mechanics import strain_at

log = logging.getLogger(__name__)

SUPPORT = 1.5


class ReconstructionError(ValueError):
    pass


@dataclass
class MaterialPoints:
    """Points of one body: positions, constant volumes and Voigt stresses."""

    x: np.ndarray
    volume: np.ndarray
    stress: np.ndarray
    body: int = 0

    def __len__(self):
        return len(self.volume)

    @property
    def total_volume(self):
        return float(self.volume.sum())


@dataclass(frozen=True)
class MlsConfig:
    h: float
    support: float = SUPPORT
    min_neighbors: int = 3
    max_condition: float = 1e8

    def __post_init__(self):
        if not self.h * self.support > 0:
            raise ValueError("MLS support radius must be positive")

    @property
    def radius(self):
        return self.support * self.h


def seed_points(quad, body=0, prestress=None):
    """One material point per integration point, volume = weight."""
    if len(quad) == 0:
        raise ValueError(f"body {body}: cannot seed material points from an empty quadrature")
    stress = np.zeros((len(quad), 3))
    if prestress is not None:
        stress[:] = prestress
    return MaterialPoints(quad.x.copy(), quad.weight.copy(), stress, body)


def update_points(grid, points, du, material):
    """Move points with the nodal increment `du` (ny, nx, 2) and add D * strain.

    The strain increment comes from the Q4 gradient of the containing cell.
    """
    if not np.all(grid.contains(points.x)):
        bad = points.x[~grid.contains(points.x)][0]
        raise ValueError(f"material point ({bad[0]:.6g}, {bad[1]:.6g}) of body {points.body} left the grid")
    cells, _ = grid.locate(points.x)
    flat = du.reshape(-1, 2)
    nodes = grid.cell_nodes(cells)
    ue = np.empty((len(cells), 8))
    ue[:, 0::2] = flat[nodes, 0]
    ue[:, 1::2] = flat[nodes, 1]
    deps = strain_at(grid, points.x, cells, ue)
    x = points.x + grid.interpolate(du, points.x)
    stress = points.stress + deps @ material.D.T
    return MaterialPoints(x, points.volume, stress, points.body)


def mls_weight(r):
    """Quadratic spline with support 3/2 (r is distance over h)."""
    r = np.abs(np.asarray(r, dtype=float))
    return np.where(r <= 0.5, 0.75 - r * r, np.where(r < 1.5, 0.5 * (1.5 - r) ** 2, 0.0))


def mls_reconstruct(sites, values, queries, cfg, tree=None):
    """Linear-basis MLS fit of scattered `values` evaluated at `queries`.

    Parameters
    ----------
    sites : ndarray (n, 2)
    values : ndarray (n,) or (n, k)
    queries : ndarray (m, 2)
    cfg : MlsConfig

    Returns
    -------
    out : ndarray (m,) or (m, k)
    fallback : ndarray of bool (m,)
        Queries where the moment matrix was ill-conditioned and the
        weighted mean was used instead.
    """
    sites = np.asarray(sites, float)
    queries = np.atleast_2d(np.asarray(queries, float))
    vals = np.asarray(values, float)
    scalar = vals.ndim == 1
    vals = vals.reshape(len(sites), -1)
    tree = cKDTree(sites) if tree is None else tree
    nbrs = tree.query_ball_point(queries, cfg.radius)
    counts = np.array([len(n) for n in nbrs])
    qi = np.repeat(np.arange(len(queries)), counts)
    pj = np.concatenate([np.asarray(n, dtype=np.int64) for n in nbrs]) if len(qi) else \
        np.empty(0, dtype=np.int64)
    d = (sites[pj] - queries[qi]) / cfg.h
    w = mls_weight(np.linalg.norm(d, axis=-1))
    pos = w > 0
    nw = np.bincount(qi[pos], minlength=len(queries))
    if np.any(nw < cfg.min_neighbors):
        k = int(np.argmax(nw < cfg.min_neighbors))
        raise ReconstructionError(
            f"MLS query ({queries[k, 0]:.6g}, {queries[k, 1]:.6g}) has {nw[k]} neighbours with nonzero weight "
            f"(need {cfg.min_neighbors})")
    # basis centred on the query and scaled by h keeps M well conditioned
    P = np.column_stack([np.ones(len(d)), d])
    M = np.zeros((len(queries), 3, 3))
    np.add.at(M, qi, w[:, None, None] * P[:, :, None] * P[:, None, :])
    b = np.zeros((len(queries), 3, vals.shape[1]))
    np.add.at(b, qi, w[:, None, None] * P[:, :, None] * vals[pj][:, None, :])
    cond = np.linalg.cond(M)
    bad = ~(cond <= cfg.max_condition)
    out = np.empty((len(queries), vals.shape[1]))
    good = ~bad
    if np.any(good):
        a = np.linalg.solve(M[good], b[good])
        out[good] = a[:, 0, :]
    if np.any(bad):
        out[bad] = b[bad, 0, :] / M[bad, 0, 0][:, None]
    return (out[:, 0] if scalar else out), bad


def confine_to_points(grid, phi, x, reach):
    """Push nodes farther than `reach` from every material point outside the body.

    Inside nodes whose distance `d` to the nearest point in `x` exceeds
    `reach` get ``phi = d - reach``; all other nodes keep their values, so
    the zero contour never strays more than `reach` from the material.  Level-set fingers that advection grows into
    a neighbour, with no material behind them, are cut back by this.

    Returns
    -------
    phi : ndarray
        New field (the input array when nothing changed).
    changed : int
        Number of nodes that moved from inside to outside.
    """
    inside = phi < 0
    if not inside.any() or len(x) == 0:
        return phi, 0
    d, _ = cKDTree(x).query(grid.nodes()[inside], distance_upper_bound=reach + 2 * grid.h)
    excess = np.minimum(d, reach + 2 * grid.h) - reach
    if not np.any(excess > 0):
        return phi, 0
    out = phi.copy()
    out[inside] = np.where(excess > 0, excess, phi[inside])
    return out, int(np.sum(excess > 0))


def project_state(points, quad, cfg, reach=2.0):
    """MLS stresses of a body's material points at its new integration points.

    An integration point that a moving boundary has just uncovered can lie
    outside the support of all but a few material points.  Such points take
    the mean stress of their `cfg.min_neighbors` nearest material points as
    long as those lie within `reach` support radii; farther is an error.
    """
    stress = np.zeros((len(quad.x), points.stress.shape[1]))
    if len(quad.x) == 0:
        return stress
    tree = cKDTree(points.x)
    dist, idx = tree.query(quad.x, k=cfg.min_neighbors)
    dist, idx = dist.reshape(len(quad.x), -1), idx.reshape(len(quad.x), -1)
    # the weight vanishes at the support radius, so equality counts as outside
    starved = dist[:, -1] >= cfg.radius
    far = dist[:, -1] > reach * cfg.radius
    if np.any(far):
        k = int(np.argmax(far))
        raise ReconstructionError(
            f"body {points.body}: integration point ({quad.x[k, 0]:.6g}, {quad.x[k, 1]:.6g}) "
            f"has only {int(np.sum(dist[k] < reach * cfg.radius))} material points within "
            f"{reach * cfg.radius / cfg.h:.3g} h (need {cfg.min_neighbors})")
    if np.any(starved):
        log.warning("body %d: %d integration point(s) outside the MLS support, using the "
                    "mean of the nearest %d material points", points.body, int(starved.sum()),
                    cfg.min_neighbors)
        stress[starved] = points.stress[idx[starved]].mean(axis=1)
    if np.any(~starved):
        stress[~starved], _ = mls_reconstruct(points.x, points.stress, quad.x[~starved], cfg,
                                              tree=tree)
    return stress


POINT_COLUMNS = ("x", "y", "volume", "sxx", "syy", "sxy", "body")


def write_points_csv(path, point_sets):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(POINT_COLUMNS)
        for pts in point_sets:
            for k in range(len(pts)):
                w.writerow([repr(float(pts.x[k, 0])), repr(float(pts.x[k, 1])),
                            repr(float(pts.volume[k]))]
                           + [repr(float(s)) for s in pts.stress[k]] + [pts.body])
