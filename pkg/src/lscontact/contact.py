"""Unbiased penalty contact between pairs of level-set bodies.

For bodies ``i`` and ``j`` the reference surface is the zero contour of
``(phi_i - phi_j) / 2`` inside the gap region between the two bodies.  Each
marching-squares segment of that contour carries one integration point;
gaps are measured between the closest points on the two true boundaries
and Coulomb friction is handled as a plasticity model with a return map.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .contour import contour_segments
from .levelset import project_points, reinitialize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrictionLaw:
    """Coulomb coefficient and penalty compliances (length / stress)."""

    mu: float
    eps_n: float
    eps_t: float

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError(f"friction coefficient must be >= 0, got {self.mu}")
        if not (self.eps_n > 0 and self.eps_t > 0):
            raise ValueError("penalty compliances must be positive")

    @classmethod
    def from_mesh(cls, mu, h, mean_modulus, eps0=1.0):
        """Compliances scaled with mesh size over the mean Young's modulus."""
        eps = eps0 * h / mean_modulus
        return cls(mu, eps, eps)


@dataclass
class ContactPoint:
    x: np.ndarray
    weight: float
    n: np.ndarray
    t: np.ndarray
    p_i: np.ndarray
    p_j: np.ndarray
    g_n0: float
    g_t_plastic: float
    tau_n: float
    tau_t: float
    active: bool


def _empty(shape=()):
    return np.zeros((0,) + shape)


@dataclass
class ContactPair:
    """Integration points of one body pair, stored as parallel arrays."""

    i: int
    j: int
    shift: float
    x: np.ndarray = field(default_factory=lambda: _empty((2,)))
    weight: np.ndarray = field(default_factory=_empty)
    n: np.ndarray = field(default_factory=lambda: _empty((2,)))
    p_i: np.ndarray = field(default_factory=lambda: _empty((2,)))
    p_j: np.ndarray = field(default_factory=lambda: _empty((2,)))
    g_n0: np.ndarray = field(default_factory=_empty)
    dropped: int = 0

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("a contact pair needs two distinct bodies")
        m = len(self.x)
        self.g_t_plastic = np.zeros(m)
        self.g_t_offset = np.zeros(m)
        self.g_n = self.g_n0.copy()
        self.g_t = np.zeros(m)
        self.tau_n = np.zeros(m)
        self.tau_t = np.zeros(m)
        self.slip = np.zeros(m, dtype=bool)
        self.active = np.zeros(m, dtype=bool)

    def __len__(self):
        return len(self.x)

    @property
    def t(self):
        return np.stack([-self.n[:, 1], self.n[:, 0]], axis=-1)

    def point(self, k):
        return ContactPoint(self.x[k], self.weight[k], self.n[k], self.t[k], self.p_i[k],
                            self.p_j[k], self.g_n0[k], self.g_t_plastic[k], self.tau_n[k],
                            self.tau_t[k], bool(self.active[k]))

    def points(self):
        return [self.point(k) for k in range(len(self))]

    def traction(self):
        """Traction vectors tau_n n + tau_t t, zero on inactive points."""
        tau = self.tau_n[:, None] * self.n + self.tau_t[:, None] * self.t
        return np.where(self.active[:, None], tau, 0.0)

    def force_on(self, body):
        """Total contact force exerted on `body` (one of i, j) by the other."""
        f = (self.weight[:, None] * self.traction()).sum(axis=0)
        if body == self.i:
            return f
        if body == self.j:
            return -f
        raise ValueError(f"body {body} is not part of pair ({self.i}, {self.j})")


def min_level_set(phi_i, phi_j):
    if np.shape(phi_i) != np.shape(phi_j):
        raise ValueError(f"grid mismatch: {np.shape(phi_i)} vs {np.shape(phi_j)}")
    return np.minimum(phi_i, phi_j)


def contact_region(grid, phi_i, phi_j, shift):
    """Node mask of the gap region where the two bodies may touch.

    True where both level sets are positive and the signed distance to the
    union of both bodies inflated by `shift` is below ``-shift``.  The
    inflated union is only rebuilt in a window around the nodes close to
    both bodies.
    """
    phi_min = min_level_set(phi_i, phi_j)
    reach = 2 * shift + grid.h
    near = (phi_i < reach) & (phi_j < reach)
    mask = np.zeros(grid.shape, dtype=bool)
    win = grid.window(near, margin=int(np.ceil((2 * shift + 3 * grid.h) / grid.h)))
    if win is None:
        return mask
    sub = grid.subgrid(win)
    shifted = phi_min[win] - shift
    if np.all(shifted > 0) or np.all(shifted < 0):
        closed = shifted
    else:
        closed = reinitialize(sub, shifted)
    mask[win] = (closed + shift < 0)
    return mask & near & (phi_i > 0) & (phi_j > 0)


def build_intermediate_surface(grid, phi_i, phi_j, region, i=0, j=1, shift=None,
                               nodal_i=None, nodal_j=None):
    """Integration points on the zero contour of ``(phi_i - phi_j) / 2``.

    The contour is extracted in cells touching `region`.  Nodes lying
    within `shift` of both bodies (which covers overlaps) are added, so that
    boundaries closer than one cell, touching or interpenetrating still
    produce a surface.  Points whose projection onto either body fails are
    dropped and counted.
    """
    shift = 1.5 * grid.h if shift is None else shift
    nodes = region | (np.maximum(phi_i, phi_j) <= shift)
    cells = nodes[:-1, :-1] | nodes[:-1, 1:] | nodes[1:, 1:] | nodes[1:, :-1]
    pair = ContactPair(i, j, shift)
    if not np.any(cells):
        return pair
    phi_int = 0.5 * (phi_i - phi_j)
    segs, _ = contour_segments(grid, phi_int, cells)
    length = np.linalg.norm(segs[:, 1] - segs[:, 0], axis=-1)
    segs = segs[length > 1e-9 * grid.h]
    length = length[length > 1e-9 * grid.h]
    if len(segs) == 0:
        return pair
    x = segs.mean(axis=1)
    g = grid.gradient(phi_int, x)
    gn = np.linalg.norm(g, axis=-1)
    ok = gn > 1e-8
    if nodal_i is None:
        nodal_i = grid.nodal_gradient(phi_i)
    if nodal_j is None:
        nodal_j = grid.nodal_gradient(phi_j)
    p_i, ci, _, _ = project_points(grid, phi_i, x, nodal=nodal_i)
    p_j, cj, _, _ = project_points(grid, phi_j, x, nodal=nodal_j)
    ok &= ci & cj
    dropped = int(np.count_nonzero(~ok))
    if dropped:
        log.warning("pair (%d, %d): dropped %d of %d contact points (projection failed)",
                    i, j, dropped, len(x))
    n = g[ok] / gn[ok, None]
    g_n0 = np.einsum("nd,nd->n", p_j[ok] - p_i[ok], n)
    return ContactPair(i, j, shift, x[ok], length[ok], n, p_i[ok], p_j[ok], g_n0, dropped)


def relative_displacement(pair, du_i, du_j):
    """Normal and tangential parts of ``du_j - du_i`` at the projected points."""
    jump = np.asarray(du_j) - np.asarray(du_i)
    return (np.einsum("nd,nd->n", jump, pair.n), np.einsum("nd,nd->n", jump, pair.t))


def evaluate_gaps(pair, du_i, du_j):
    """Update the pair's gaps from displacements sampled at P_i and P_j.

    ``g_n = g_n0 + (du_j - du_i) . n`` and ``g_t = offset + (du_j - du_i) . t``
    where the offset carries tangential slip accumulated over earlier
    load steps.  Returns ``(g_n, g_t)``.
    """
    dn, dt = relative_displacement(pair, du_i, du_j)
    pair.g_n = pair.g_n0 + dn
    pair.g_t = pair.g_t_offset + dt
    return pair.g_n, pair.g_t


def return_map(g_n, g_t, g_t_plastic, law):
    """Penalty tractions with Coulomb return mapping.

    Parameters
    ----------
    g_n, g_t, g_t_plastic : array_like
        Normal gap, tangential gap and accumulated plastic slip.
    law : FrictionLaw

    Returns
    -------
    tau_n, tau_t, g_t_plastic_new, slip
        ``slip`` flags points returned to the yield surface.
    """
    g_n = np.asarray(g_n, dtype=float)
    g_t = np.asarray(g_t, dtype=float)
    gp = np.asarray(g_t_plastic, dtype=float)
    tau_n = g_n / law.eps_n
    trial = (g_t - gp) / law.eps_t
    f_trial = np.abs(trial) - law.mu * np.abs(tau_n)
    slip = f_trial > 0
    sign = np.sign(trial)
    # the compliance in the slip increment cancels against the one in the
    # traction correction, so the traction lands exactly on mu*|tau_n|
    tau_t = np.where(slip, sign * law.mu * np.abs(tau_n), trial)
    gp_new = np.where(slip, gp + law.eps_t * f_trial * sign, gp)
    return tau_n, tau_t, gp_new, slip


def active_set(tau_n):
    """Points carrying compressive normal traction (strictly negative)."""
    return np.asarray(tau_n) < 0


def update_tractions(pair, law):
    """Return-map every point of the pair from its current gaps.

    Inactive points keep their plastic slip; the new slip values are
    returned rather than stored so the caller decides when to commit them.
    """
    tau_n, tau_t, gp_new, slip = return_map(pair.g_n, pair.g_t, pair.g_t_plastic, law)
    active = active_set(tau_n)
    pair.tau_n = tau_n
    pair.tau_t = np.where(active, tau_t, 0.0)
    pair.slip = slip & active
    pair.active = active
    return np.where(active, gp_new, pair.g_t_plastic)


def transfer_plastic_history(old, new, radius):
    """Seed the history of a regenerated pair from the nearest old point."""
    if old is not None and {old.i, old.j} != {new.i, new.j}:
        raise ValueError("history transfer between different body pairs")
    new.g_t_plastic = np.zeros(len(new))
    new.g_t_offset = np.zeros(len(new))
    if old is None or len(old) == 0 or len(new) == 0:
        return new
    flip = -1.0 if (old.i, old.j) != (new.i, new.j) else 1.0
    dist, idx = cKDTree(old.x).query(new.x, k=1, distance_upper_bound=radius)
    hit = np.isfinite(dist)
    # the tangent follows the normal, so swapping the bodies flips slip signs
    new.g_t_plastic[hit] = flip * old.g_t_plastic[idx[hit]]
    new.g_t_offset[hit] = flip * old.g_t[idx[hit]]
    return new


CSV_COLUMNS = ("x", "y", "n_x", "n_y", "g_n", "g_t", "g_t_plastic", "tau_n", "tau_t", "active")


def write_pair_csv(path, pair):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for k in range(len(pair)):
            w.writerow([repr(float(v)) for v in (pair.x[k, 0], pair.x[k, 1], pair.n[k, 0],
                                                 pair.n[k, 1], pair.g_n[k], pair.g_t[k],
                                                 pair.g_t_plastic[k], pair.tau_n[k],
                                                 pair.tau_t[k])] + [int(pair.active[k])])
