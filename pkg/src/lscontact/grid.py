"""Cartesian background grid shared by every body.

Nodal fields are plain numpy arrays of shape ``(ny, nx)`` (scalars) or
``(ny, nx, d)`` (vectors), so that ``values[j, i]`` lives at
``origin + (i*h, j*h)`` and the flattened layout is row-major with x
running fastest.  Cells are indexed the same way, ``cell = j*(nx-1) + i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INTERIOR, CUT, EXTERIOR = 0, 1, 2

#: number of node layers next to the grid edge that bodies must stay clear of
HALO = 3


@dataclass(frozen=True)
class Grid:
    origin: tuple
    h: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"grid spacing must be positive, got {self.h}")
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid needs at least 4x4 nodes, got {self.nx}x{self.ny}")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))

    @classmethod
    def from_extent(cls, xmin, xmax, ymin, ymax, h):
        """Smallest grid with spacing `h` anchored at (xmin, ymin) covering the box."""
        nx = int(np.ceil((xmax - xmin) / h - 1e-9)) + 1
        ny = int(np.ceil((ymax - ymin) / h - 1e-9)) + 1
        return cls((xmin, ymin), h, nx, ny)

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def cell_shape(self):
        return (self.ny - 1, self.nx - 1)

    @property
    def n_nodes(self):
        return self.nx * self.ny

    @property
    def n_cells(self):
        return (self.nx - 1) * (self.ny - 1)

    @property
    def x(self):
        return self.origin[0] + self.h * np.arange(self.nx)

    @property
    def y(self):
        return self.origin[1] + self.h * np.arange(self.ny)

    @property
    def upper(self):
        return (self.origin[0] + (self.nx - 1) * self.h, self.origin[1] + (self.ny - 1) * self.h)

    def nodes(self):
        """Node coordinates, shape ``(ny, nx, 2)``."""
        X, Y = np.meshgrid(self.x, self.y)
        return np.stack([X, Y], axis=-1)

    def node_coords(self, ids):
        ids = np.asarray(ids)
        j, i = np.divmod(ids, self.nx)
        return np.stack([self.origin[0] + i * self.h, self.origin[1] + j * self.h], axis=-1)

    def cell_nodes(self, cells):
        """Flat node ids of cells, counter-clockwise from the lower-left corner."""
        cells = np.asarray(cells)
        j, i = np.divmod(cells, self.nx - 1)
        n0 = j * self.nx + i
        return np.stack([n0, n0 + 1, n0 + self.nx + 1, n0 + self.nx], axis=-1)

    def cell_origin(self, cells):
        cells = np.asarray(cells)
        j, i = np.divmod(cells, self.nx - 1)
        return np.stack([self.origin[0] + i * self.h, self.origin[1] + j * self.h], axis=-1)

    def contains(self, pts, margin=0.0):
        pts = np.atleast_2d(pts)
        lo = np.array(self.origin) + margin
        hi = np.array(self.upper) - margin
        tol = 1e-12 * self.h
        return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=-1)

    def _check_inside(self, pts):
        inside = self.contains(pts)
        if not np.all(inside):
            bad = np.atleast_2d(pts)[~inside][0]
            raise ValueError(
                f"point ({bad[0]:.6g}, {bad[1]:.6g}) lies outside the grid bounds "
                f"[{self.origin[0]}, {self.upper[0]}] x [{self.origin[1]}, {self.upper[1]}]"
            )

    def locate(self, pts):
        """Containing cell and local coordinates in [0, 1]^2 for each point.

        Points on the upper boundary are assigned to the last cell row/column.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        self._check_inside(pts)
        s = (pts - np.array(self.origin)) / self.h
        ij = np.floor(s).astype(np.int64)
        ij[:, 0] = np.clip(ij[:, 0], 0, self.nx - 2)
        ij[:, 1] = np.clip(ij[:, 1], 0, self.ny - 2)
        local = s - ij
        cells = ij[:, 1] * (self.nx - 1) + ij[:, 0]
        return cells, local

    def interpolate(self, values, pts):
        """Bilinear interpolation of a nodal field at arbitrary points.

        Returns one value (or vector) per point; a single point given as a
        1-d array yields an unbatched result.
        """
        single = np.ndim(pts) == 1
        cells, local = self.locate(pts)
        flat = values.reshape(self.n_nodes, *values.shape[2:])
        nodes = self.cell_nodes(cells)
        s, t = local[:, 0], local[:, 1]
        w = np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t], axis=-1)
        if flat.ndim == 1:
            out = np.einsum("nk,nk->n", w, flat[nodes])
        else:
            out = np.einsum("nk,nkd->nd", w, flat[nodes])
        return out[0] if single else out

    def nodal_gradient(self, values):
        """Central-difference gradient at every node (one-sided on the edges)."""
        gy, gx = np.gradient(values, self.h, self.h, axis=(0, 1))
        return np.stack([gx, gy], axis=-1)

    def gradient(self, values, pts, nodal=None):
        """Gradient of a scalar field at points.

        Nodal central differences are bilinearly interpolated to `pts`; pass
        a precomputed `nodal` gradient to avoid recomputing it.
        """
        if nodal is None:
            nodal = self.nodal_gradient(values)
        return self.interpolate(nodal, pts)

    def classify_cells(self, phi):
        """INTERIOR / CUT / EXTERIOR code for every cell, shape ``(ny-1, nx-1)``."""
        corners = np.stack([phi[:-1, :-1], phi[:-1, 1:], phi[1:, 1:], phi[1:, :-1]])
        out = np.full(self.cell_shape, CUT, dtype=np.int8)
        out[np.all(corners < 0, axis=0)] = INTERIOR
        out[np.all(corners > 0, axis=0)] = EXTERIOR
        return out

    def classify_cell(self, phi, cell):
        """Code of the single cell with lower-left node index ``(i, j)``."""
        i, j = cell
        corners = phi[j:j + 2, i:i + 2]
        if np.all(corners < 0):
            return INTERIOR
        if np.all(corners > 0):
            return EXTERIOR
        return CUT

    def window(self, mask, margin=0):
        """Index slices of the bounding box of `mask`, grown by `margin` nodes."""
        js, is_ = np.nonzero(mask)
        if len(js) == 0:
            return None
        j0 = max(js.min() - margin, 0)
        j1 = min(js.max() + margin + 1, self.ny)
        i0 = max(is_.min() - margin, 0)
        i1 = min(is_.max() + margin + 1, self.nx)
        return slice(j0, j1), slice(i0, i1)

    def subgrid(self, window):
        sj, si = window
        return Grid((self.origin[0] + si.start * self.h, self.origin[1] + sj.start * self.h),
                    self.h, si.stop - si.start, sj.stop - sj.start)
