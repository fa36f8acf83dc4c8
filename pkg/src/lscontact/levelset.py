"""Level sets on the background grid: construction, reinitialization,
velocity extension, Hamilton-Jacobi advection and closest-point projection.

Sign convention: ``phi < 0`` inside a body, ``phi > 0`` outside.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .contour import contour_segments
from .grid import HALO

log = logging.getLogger(__name__)

GRAD_GUARD = 1e-8


class ProjectionError(RuntimeError):
    """Closest-point iteration failed; carries the last iterate and residuals."""

    def __init__(self, msg, point=None, phi=None, tangential=None):
        super().__init__(msg)
        self.point = point
        self.phi = phi
        self.tangential = tangential


# ---------------------------------------------------------------- shapes

def _segment_distance(p, a, b):
    """Distance from points p (n, 2) to segments a-b (m, 2); returns (n, m)."""
    ab = b - a
    ap = p[:, None, :] - a[None, :, :]
    denom = np.einsum("md,md->m", ab, ab)
    denom = np.where(denom > 0, denom, 1.0)
    t = np.clip(np.einsum("nmd,md->nm", ap, ab) / denom, 0.0, 1.0)
    d = ap - t[..., None] * ab[None]
    return np.sqrt(np.einsum("nmd,nmd->nm", d, d))


def _segments_intersect(p1, p2, q1, q2):
    def orient(a, b, c):
        return np.sign((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
                       - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0]))
    return ((orient(p1, p2, q1) * orient(p1, p2, q2) < 0)
            & (orient(q1, q2, p1) * orient(q1, q2, p2) < 0))


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float

    def signed_distance(self, pts):
        return np.linalg.norm(pts - np.asarray(self.center, float), axis=-1) - self.radius

    def bounds(self):
        cx, cy = self.center
        r = self.radius
        return cx - r, cx + r, cy - r, cy + r

    def moved(self, translation=(0.0, 0.0), angle=0.0, pivot=(0.0, 0.0)):
        c = _rigid_map(np.asarray(self.center, float)[None], translation, angle, pivot)[0]
        return Circle(tuple(c), self.radius)


@dataclass(frozen=True)
class Rectangle:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        if not (self.upper[0] > self.lower[0] and self.upper[1] > self.lower[1]):
            raise ValueError(f"degenerate rectangle {self.lower} - {self.upper}")

    def signed_distance(self, pts):
        lo = np.asarray(self.lower, float)
        hi = np.asarray(self.upper, float)
        c = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        q = np.abs(pts - c) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def bounds(self):
        return self.lower[0], self.upper[0], self.lower[1], self.upper[1]

    def moved(self, translation=(0.0, 0.0), angle=0.0, pivot=(0.0, 0.0)):
        if angle == 0.0:
            t = np.asarray(translation, float)
            return Rectangle(tuple(np.asarray(self.lower) + t), tuple(np.asarray(self.upper) + t))
        return self.as_polygon().moved(translation, angle, pivot)

    def as_polygon(self):
        (x0, y0), (x1, y1) = self.lower, self.upper
        return Polygon(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


@dataclass(frozen=True)
class Polygon:
    vertices: tuple

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("a polygon needs at least three (x, y) vertices")
        object.__setattr__(self, "vertices", tuple(map(tuple, v)))
        if self.self_intersecting():
            raise ValueError("polygon is self-intersecting")

    @property
    def array(self):
        return np.asarray(self.vertices, dtype=float)

    def self_intersecting(self):
        v = self.array
        n = len(v)
        a, b = v, np.roll(v, -1, axis=0)
        i, j = np.triu_indices(n, k=2)
        keep = ~((i == 0) & (j == n - 1))
        i, j = i[keep], j[keep]
        return bool(np.any(_segments_intersect(a[i], b[i], a[j], b[j])))

    def winding(self, pts):
        v = self.array
        a, b = v, np.roll(v, -1, axis=0)
        px, py = pts[:, None, 0], pts[:, None, 1]
        cross = (b[:, 0] - a[:, 0]) * (py - a[:, 1]) - (px - a[:, 0]) * (b[:, 1] - a[:, 1])
        up = (a[:, 1] <= py) & (b[:, 1] > py) & (cross > 0)
        down = (a[:, 1] > py) & (b[:, 1] <= py) & (cross < 0)
        return up.sum(axis=1) - down.sum(axis=1)

    def signed_distance(self, pts, chunk=4096):
        v = self.array
        a, b = v, np.roll(v, -1, axis=0)
        out = np.empty(len(pts))
        for s in range(0, len(pts), chunk):
            p = pts[s:s + chunk]
            d = _segment_distance(p, a, b).min(axis=1)
            out[s:s + chunk] = np.where(self.winding(p) != 0, -d, d)
        return out

    def bounds(self):
        v = self.array
        return v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max()

    def area(self):
        x, y = self.array.T
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def moved(self, translation=(0.0, 0.0), angle=0.0, pivot=(0.0, 0.0)):
        return Polygon(tuple(map(tuple, _rigid_map(self.array, translation, angle, pivot))))


def _rigid_map(pts, translation, angle, pivot):
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s], [s, c]])
    p = np.asarray(pivot, float)
    return (pts - p) @ R.T + p + np.asarray(translation, float)


def circular_cap(center, radius, y_cut, below=True, spacing=None):
    """Polygon of the part of a disc below (or above) the line ``y = y_cut``."""
    cx, cy = center
    dy = y_cut - cy
    if abs(dy) >= radius:
        raise ValueError("cut line misses the circle")
    half = np.arccos(-dy / radius) if below else np.arccos(dy / radius)
    mid = -np.pi / 2 if below else np.pi / 2
    n = 256 if spacing is None else max(16, int(np.ceil(2 * half * radius / spacing)))
    ang = np.linspace(mid - half, mid + half, n + 1)
    pts = np.stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)], axis=-1)
    pts[0, 1] = pts[-1, 1] = y_cut
    return Polygon(tuple(map(tuple, pts)))


def init_primitive(shape, grid, snap=1e-10):
    """Signed distance of a Circle / Rectangle / Polygon sampled at the grid nodes.

    The shape must keep a margin of `HALO` cells from the grid edge.  Values
    within ``snap * h`` of zero are set to exactly zero so that boundaries
    lying on grid lines are recognised as such.
    """
    xmin, xmax, ymin, ymax = shape.bounds()
    margin = HALO * grid.h
    (gx0, gy0), (gx1, gy1) = grid.origin, grid.upper
    tol = 1e-9 * grid.h
    if (xmin < gx0 + margin - tol or xmax > gx1 - margin + tol
            or ymin < gy0 + margin - tol or ymax > gy1 - margin + tol):
        raise ValueError(
            f"shape bounds ({xmin}, {xmax}, {ymin}, {ymax}) enter the {HALO}-cell halo of grid "
            f"[{gx0}, {gx1}] x [{gy0}, {gy1}]")
    phi = shape.signed_distance(grid.nodes().reshape(-1, 2)).reshape(grid.shape)
    phi[np.abs(phi) < snap * grid.h] = 0.0
    return phi


def load_levelset(path):
    """Read a raw level-set grid file.

    Format: a header line ``nx ny h x0 y0`` followed by ``nx*ny`` floats in
    row-major order (x fastest), whitespace separated.
    """
    from .grid import Grid
    with open(path) as fh:
        header = fh.readline().split()
        nx, ny = int(header[0]), int(header[1])
        h, x0, y0 = map(float, header[2:5])
        data = np.array(fh.read().split(), dtype=float)
    if data.size != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {data.size}")
    return Grid((x0, y0), h, nx, ny), data.reshape(ny, nx)


def save_levelset(path, grid, phi):
    with open(path, "w") as fh:
        fh.write(f"{grid.nx} {grid.ny} {grid.h!r} {grid.origin[0]!r} {grid.origin[1]!r}\n")
        np.savetxt(fh, phi.reshape(grid.ny, grid.nx), fmt="%.17g")


# ---------------------------------------------------------- reinitialize

def distance_to_segments(pts, segments, k=8):
    """Unsigned distance from points to a polyline soup (exact among k nearest)."""
    mid = segments.mean(axis=1)
    k = min(k, len(segments))
    _, idx = cKDTree(mid).query(pts, k=k)
    idx = idx.reshape(len(pts), k)
    a = segments[idx, 0]
    b = segments[idx, 1]
    ab = b - a
    ap = pts[:, None, :] - a
    denom = np.einsum("nkd,nkd->nk", ab, ab)
    denom = np.where(denom > 0, denom, 1.0)
    t = np.clip(np.einsum("nkd,nkd->nk", ap, ab) / denom, 0.0, 1.0)
    d = ap - t[..., None] * ab
    return np.sqrt(np.einsum("nkd,nkd->nk", d, d)).min(axis=1)


def interface_nodes(phi):
    """Nodes that are zero or an endpoint of a grid edge with a sign change."""
    out = phi == 0
    cut = (phi[:, :-1] > 0) != (phi[:, 1:] > 0)
    cut &= (phi[:, :-1] != 0) & (phi[:, 1:] != 0)
    out[:, :-1] |= cut
    out[:, 1:] |= cut
    cut = (phi[:-1] > 0) != (phi[1:] > 0)
    cut &= (phi[:-1] != 0) & (phi[1:] != 0)
    out[:-1] |= cut
    out[1:] |= cut
    return out


def reinitialize(grid, phi):
    """Rebuild `phi` as the signed distance to its own zero isocontour.

    The contour is extracted by marching squares and every node away from
    it gets its exact distance to the extracted polyline, with the sign of
    the input.  Nodes on cut edges keep the input values rescaled by one
    common factor (the median distance-to-value ratio), which leaves every
    edge crossing, and therefore the contour itself, exactly in place.
    """
    segs, _ = contour_segments(grid, phi)
    if len(segs) == 0:
        raise ValueError("no interface: level set has uniform sign")
    d = distance_to_segments(grid.nodes().reshape(-1, 2), segs).reshape(grid.shape)
    out = np.sign(phi) * d
    near = interface_nodes(phi)
    nz = near & (phi != 0)
    scale = np.median(d[nz] / np.abs(phi[nz])) if np.any(nz) else 1.0
    out[near] = scale * phi[near]
    return out


# ------------------------------------------------------------ extension

def extrapolate(grid, phi, values, known=None, band=None):
    """Constant-normal extension of a nodal field off the known region.

    Unknown nodes are visited in increasing ``phi`` (a min-heap front seeded
    next to the known region) and receive the first-order upwind value
    solving ``grad(phi) . grad(f) = 0``.  Nodes farther than `band` from the
    interface take the value of the nearest visited node.

    Parameters
    ----------
    phi : ndarray (ny, nx)
        Reinitialized level set of the body.
    values : ndarray (ny, nx) or (ny, nx, d)
        Field, trusted only on `known` nodes.
    known : ndarray of bool, optional
        Defaults to ``phi <= 0``.
    band : float, optional
        Distance beyond which the march stops (default: whole grid).
    """
    if known is None:
        known = phi <= 0
    if not np.any(known):
        raise ValueError("cannot extrapolate: no known (interior) nodes")
    ny, nx = grid.shape
    f = np.array(values, dtype=float, copy=True).reshape(ny * nx, -1)
    ph = phi.ravel()
    done = known.ravel().copy()
    limit = np.inf if band is None else band
    nbr = ((-1, 0), (1, 0), (0, -1), (0, 1))

    heap = []
    queued = done.copy()
    front = ndimage.binary_dilation(known) & ~known
    for n in np.flatnonzero(front.ravel()):
        heapq.heappush(heap, (ph[n], n))
        queued[n] = True
    while heap:
        key, n = heapq.heappop(heap)
        if key > limit:
            break
        j, i = divmod(n, nx)
        num = 0.0
        den = 0.0
        fallback = []
        for axis in (0, 1):
            best = None
            for dj, di in nbr[2 * axis:2 * axis + 2]:
                jj, ii = j + dj, i + di
                if not (0 <= jj < ny and 0 <= ii < nx):
                    continue
                m = jj * nx + ii
                if not done[m]:
                    continue
                fallback.append(m)
                if ph[m] <= ph[n] and (best is None or ph[m] < ph[best]):
                    best = m
            if best is not None:
                w = ph[n] - ph[best]
                num = num + w * f[best]
                den += w
        if den > 0:
            f[n] = num / den
        else:
            f[n] = f[fallback].mean(axis=0)
        done[n] = True
        for dj, di in nbr:
            jj, ii = j + dj, i + di
            if 0 <= jj < ny and 0 <= ii < nx:
                m = jj * nx + ii
                if not queued[m]:
                    queued[m] = True
                    heapq.heappush(heap, (ph[m], m))
    if not np.all(done):
        _, (jj, ii) = ndimage.distance_transform_edt(~done.reshape(ny, nx), return_indices=True)
        src = (jj * nx + ii).ravel()
        rest = ~done
        f[rest] = f[src[rest]]
    return f.reshape(np.shape(values))


# ------------------------------------------------------------ advection

def _weno5(v1, v2, v3, v4, v5):
    p1 = v1 / 3 - 7 * v2 / 6 + 11 * v3 / 6
    p2 = -v2 / 6 + 5 * v3 / 6 + v4 / 3
    p3 = v3 / 3 + 5 * v4 / 6 - v5 / 6
    s1 = 13 / 12 * (v1 - 2 * v2 + v3) ** 2 + 0.25 * (v1 - 4 * v2 + 3 * v3) ** 2
    s2 = 13 / 12 * (v2 - 2 * v3 + v4) ** 2 + 0.25 * (v2 - v4) ** 2
    s3 = 13 / 12 * (v3 - 2 * v4 + v5) ** 2 + 0.25 * (3 * v3 - 4 * v4 + v5) ** 2
    eps = 1e-6 * np.maximum.reduce([v1 * v1, v2 * v2, v3 * v3, v4 * v4, v5 * v5]) + 1e-99
    a1 = 0.1 / (eps + s1) ** 2
    a2 = 0.6 / (eps + s2) ** 2
    a3 = 0.3 / (eps + s3) ** 2
    return (a1 * p1 + a2 * p2 + a3 * p3) / (a1 + a2 + a3)


def _one_sided(phi, h, axis, scheme):
    """Left- and right-biased derivatives along `axis` (0 = y, 1 = x)."""
    g = HALO
    p = np.pad(phi, g, mode="edge")
    d = np.diff(p, axis=axis) / h          # d[k] = (p[k+1] - p[k]) / h
    n = phi.shape[axis]

    def sl(k):
        idx = [slice(g, -g)] * 2
        idx[axis] = slice(k, k + n)
        return d[tuple(idx)]

    # node m (padded index m+g) has backward difference d[m+g-1], forward d[m+g]
    if scheme == "upwind":
        return sl(g - 1), sl(g)
    minus = _weno5(sl(g - 3), sl(g - 2), sl(g - 1), sl(g), sl(g + 1))
    plus = _weno5(sl(g + 2), sl(g + 1), sl(g), sl(g - 1), sl(g - 2))
    return minus, plus


def _rate(phi, vel, h, scheme):
    out = np.zeros_like(phi)
    for comp, axis in ((0, 1), (1, 0)):
        v = vel[..., comp]
        if not np.any(v):
            continue
        minus, plus = _one_sided(phi, h, axis, scheme)
        out -= np.where(v > 0, v * minus, v * plus)
    return out


def advect(grid, phi, velocity, pseudo_time=1.0, scheme="weno5", cfl=0.5):
    """Solve ``phi_t + v . grad(phi) = 0`` over `pseudo_time`.

    ``scheme="weno5"`` uses fifth-order HJ-WENO with third-order TVD
    Runge-Kutta; ``scheme="upwind"`` uses first-order upwinding with forward
    Euler.  Substeps keep ``max|v| dt / h <= cfl``.
    """
    if scheme not in ("weno5", "upwind"):
        raise ValueError(f"unknown advection scheme {scheme!r}")
    velocity = np.asarray(velocity, dtype=float)
    if not np.all(np.isfinite(velocity)):
        raise ValueError("advection velocity contains non-finite values")
    vmax = np.max(np.linalg.norm(velocity, axis=-1)) if velocity.size else 0.0
    if vmax == 0.0:
        return phi.copy()
    nsub = max(1, int(np.ceil(vmax * pseudo_time / (cfl * grid.h) - 1e-12)))
    dt = pseudo_time / nsub
    h = grid.h
    phi = phi.astype(float, copy=True)
    for _ in range(nsub):
        if scheme == "upwind":
            phi = phi + dt * _rate(phi, velocity, h, scheme)
            continue
        p1 = phi + dt * _rate(phi, velocity, h, scheme)
        p2 = 0.75 * phi + 0.25 * (p1 + dt * _rate(p1, velocity, h, scheme))
        phi = phi / 3 + 2 / 3 * (p2 + dt * _rate(p2, velocity, h, scheme))
    return phi


# ------------------------------------------------- projection and normals

def normal(grid, phi, x, nodal=None):
    """Outward unit normal grad(phi)/|grad(phi)| at point(s) x."""
    g = grid.gradient(phi, x, nodal=nodal)
    norm = np.linalg.norm(g, axis=-1)
    if np.any(norm <= GRAD_GUARD):
        raise ValueError(f"degenerate normal: |grad phi| = {np.min(norm):.3g} at {x}")
    return g / norm[..., None]


def project_points(grid, phi, x0, tol=None, max_iter=50, nodal=None):
    """Vectorised closest-point projection onto the zero contour of `phi`.

    Each iteration takes a Newton step onto the surface followed by the
    tangential correction pulling the iterate back in line with x0 along
    the gradient.  Returns ``(points, converged, phi_residual,
    tangential_residual)``.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    tol = 1e-3 * grid.h if tol is None else tol
    if nodal is None:
        nodal = grid.nodal_gradient(phi)
    x = x0.copy()
    lo = np.array(grid.origin)
    hi = np.array(grid.upper)
    active = np.ones(len(x), dtype=bool)
    conv = np.zeros(len(x), dtype=bool)
    res_phi = np.full(len(x), np.inf)
    res_tan = np.full(len(x), np.inf)
    for _ in range(max_iter + 1):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        xk = np.clip(x[idx], lo, hi)
        f = grid.interpolate(phi, xk)
        g = grid.interpolate(nodal, xk)
        gg = np.einsum("nd,nd->n", g, g)
        bad = gg <= GRAD_GUARD ** 2
        gg = np.where(bad, 1.0, gg)
        d1 = -(f / gg)[:, None] * g
        r = x0[idx] - xk
        d2 = r - (np.einsum("nd,nd->n", r, g) / gg)[:, None] * g
        res_phi[idx] = np.abs(f)
        res_tan[idx] = np.linalg.norm(d2, axis=-1)
        done = (res_phi[idx] < tol) & (res_tan[idx] < tol) & ~bad
        conv[idx[done]] = True
        active[idx[done | bad]] = False
        step = ~(done | bad)
        x[idx[step]] = xk[step] + d1[step] + d2[step]
    return x, conv, res_phi, res_tan


def closest_point_projection(grid, phi, x0, tol=None, max_iter=50):
    """Project a single point onto the zero isocontour; raises on failure."""
    x, conv, rp, rt = project_points(grid, phi, x0, tol=tol, max_iter=max_iter)
    if not conv[0]:
        raise ProjectionError(
            f"closest-point projection of ({np.ravel(x0)[0]:.6g}, {np.ravel(x0)[1]:.6g}) "
            f"did not converge in "
            f"{max_iter} iterations (|phi|={rp[0]:.3g}, tangential={rt[0]:.3g})",
            point=x[0], phi=rp[0], tangential=rt[0])
    return x[0]
