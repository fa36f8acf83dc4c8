"""Marching squares on nodal level-set fields.

Edge crossings are always interpolated along increasing x (horizontal
edges) or increasing y (vertical edges), so neighbouring cells produce
bit-identical shared endpoints.
"""

import numpy as np

# edges: 0 bottom (v0-v1), 1 right (v1-v2), 2 top (v3-v2), 3 left (v0-v3)
# case index bit k set <=> corner k is positive
_PAIRS = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)], 6: [(0, 2)], 7: [(3, 2)],
    8: [(2, 3)], 9: [(0, 2)], 11: [(1, 2)], 12: [(1, 3)], 13: [(0, 1)], 14: [(3, 0)],
}


def _edge_points(grid, phi, cells):
    """Crossing points on the four edges of each cell, shape (n, 4, 2)."""
    j, i = np.divmod(cells, grid.nx - 1)
    v0, v1 = phi[j, i], phi[j, i + 1]
    v2, v3 = phi[j + 1, i + 1], phi[j + 1, i]
    x0 = grid.origin[0] + i * grid.h
    y0 = grid.origin[1] + j * grid.h
    h = grid.h

    def frac(a, b):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = a / (a - b)
        return np.where(np.isfinite(t), np.clip(t, 0.0, 1.0), 0.5)

    pts = np.empty((len(cells), 4, 2))
    t = frac(v0, v1)
    pts[:, 0] = np.stack([x0 + t * h, y0], axis=-1)
    t = frac(v1, v2)
    pts[:, 1] = np.stack([x0 + h + 0 * t, y0 + t * h], axis=-1)
    t = frac(v3, v2)
    pts[:, 2] = np.stack([x0 + t * h, y0 + h + 0 * t], axis=-1)
    t = frac(v0, v3)
    pts[:, 3] = np.stack([x0 + 0 * t, y0 + t * h], axis=-1)
    return pts, np.stack([v0, v1, v2, v3], axis=-1)


def contour_segments(grid, phi, cell_mask=None):
    """Zero-isocontour of `phi` as straight segments, one or two per cut cell.

    Parameters
    ----------
    grid : Grid
    phi : ndarray, shape (ny, nx)
    cell_mask : ndarray of bool, shape (ny-1, nx-1), optional
        Restrict extraction to these cells.

    Returns
    -------
    segments : ndarray, shape (m, 2, 2)
    cells : ndarray, shape (m,)
        Flat index of the cell that produced each segment.
    """
    pos = phi > 0
    case = (pos[:-1, :-1].astype(np.int8) | (pos[:-1, 1:] << 1)
            | (pos[1:, 1:] << 2) | (pos[1:, :-1] << 3))
    sel = (case != 0) & (case != 15)
    if cell_mask is not None:
        sel &= cell_mask
    cells = np.flatnonzero(sel)
    if len(cells) == 0:
        return np.empty((0, 2, 2)), np.empty(0, dtype=np.int64)
    codes = case.ravel()[cells]
    pts, vals = _edge_points(grid, phi, cells)

    segs, owners = [], []
    for code, pairs in _PAIRS.items():
        idx = np.flatnonzero(codes == code)
        if len(idx) == 0:
            continue
        for a, b in pairs:
            segs.append(np.stack([pts[idx, a], pts[idx, b]], axis=1))
            owners.append(cells[idx])
    for code in (5, 10):
        idx = np.flatnonzero(codes == code)
        if len(idx) == 0:
            continue
        center = vals[idx].mean(axis=1)
        # positive corners 0,2 (code 5) or 1,3 (code 10)
        sep_pos = center <= 0 if code == 5 else center > 0
        for mask, pairs in ((sep_pos, [(3, 0), (1, 2)]), (~sep_pos, [(0, 1), (2, 3)])):
            sub = idx[mask]
            for a, b in pairs:
                segs.append(np.stack([pts[sub, a], pts[sub, b]], axis=1))
                owners.append(cells[sub])
    segs = np.concatenate(segs)
    owners = np.concatenate(owners)
    order = np.argsort(owners, kind="stable")
    return segs[order], owners[order]


def interior_polygons(grid, phi, cells):
    """Part of each cell where the bilinear-edge-interpolated phi is <= 0.

    Corners with ``phi <= 0`` are kept, strict sign changes along edges add
    crossing points.  Saddle cells whose negative corners are separated (as
    decided by the cell-centre value, consistent with `contour_segments`)
    yield two triangles.  Returns a list, per cell, of polygons (arrays of
    counter-clockwise vertices).
    """
    cells = np.asarray(cells)
    pts, vals = _edge_points(grid, phi, cells)
    corners = grid.cell_origin(cells)[:, None, :] + grid.h * np.array(
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    # walking order edge after corner k: 0 bottom, 1 right, 2 top, 3 left
    out = []
    for c in range(len(cells)):
        v = vals[c]
        inside = v <= 0
        neg = v < 0
        posv = v > 0
        if neg[0] and neg[2] and posv[1] and posv[3] and v.mean() > 0:
            out.append([np.array([corners[c, 0], pts[c, 0], pts[c, 3]]),
                        np.array([corners[c, 2], pts[c, 2], pts[c, 1]])])
            continue
        if neg[1] and neg[3] and posv[0] and posv[2] and v.mean() > 0:
            out.append([np.array([corners[c, 1], pts[c, 1], pts[c, 0]]),
                        np.array([corners[c, 3], pts[c, 3], pts[c, 2]])])
            continue
        poly = []
        for k in range(4):
            if inside[k]:
                poly.append(corners[c, k])
            k1 = (k + 1) % 4
            if (neg[k] and posv[k1]) or (posv[k] and neg[k1]):
                poly.append(pts[c, k])
        out.append([np.array(poly)] if len(poly) >= 3 else [])
    return out


def polygon_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def chain_segments(segments, tol):
    """Order segment indices into polylines by matching shared endpoints.

    Returns a list of index arrays, one per connected polyline.
    """
    m = len(segments)
    if m == 0:
        return []
    keys = np.round(segments.reshape(-1, 2) / tol).astype(np.int64)
    table = {}
    for k, key in enumerate(map(tuple, keys)):
        table.setdefault(key, []).append(k)
    used = np.zeros(m, dtype=bool)

    def neighbours(seg, end):
        key = tuple(keys[2 * seg + end])
        return [e // 2 for e in table[key] if e // 2 != seg and not used[e // 2]]

    chains = []
    for start in range(m):
        if used[start]:
            continue
        used[start] = True
        chain = [start]
        # walk forward from endpoint 1, then backward from endpoint 0
        for end, front in ((1, True), (0, False)):
            seg, tip = start, end
            while True:
                nxt = neighbours(seg, tip)
                if not nxt:
                    break
                n = nxt[0]
                used[n] = True
                key = tuple(keys[2 * seg + tip])
                tip = 1 if tuple(keys[2 * n]) == key else 0
                if front:
                    chain.append(n)
                else:
                    chain.insert(0, n)
                seg = n
        chains.append(np.array(chain))
    return chains
