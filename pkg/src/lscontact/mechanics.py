"""Plane-strain elasticity on the background grid with penalty contact.

Bulk terms use bilinear Q4 shape functions on grid cells.  Cells fully
inside a body get 2x2 Gauss points; cut cells are clipped to the body and
fan-triangulated, with one point at each triangle centroid.  Each body owns
its own unknowns on the shared grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .contact import evaluate_gaps, return_map, update_tractions
from .contour import interior_polygons, polygon_area
from .grid import CUT, INTERIOR

log = logging.getLogger(__name__)

GAUSS = 0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)
FULL_GAUSS, SUBTRIANGLE = 0, 1
CBRT_EPS = np.cbrt(np.finfo(float).eps)


class SingularTangentError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


@dataclass(frozen=True)
class Material:
    E: float
    nu: float

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError(f"Young's modulus must be positive, got {self.E}")
        if not 0 <= self.nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in [0, 0.5), got {self.nu}")

    @property
    def D(self):
        """Plane-strain stiffness in Voigt order (xx, yy, xy) with engineering shear."""
        E, nu = self.E, self.nu
        c = E / ((1 + nu) * (1 - 2 * nu))
        return c * np.array([[1 - nu, nu, 0.0], [nu, 1 - nu, 0.0], [0.0, 0.0, 0.5 - nu]])


# ------------------------------------------------------------- quadrature

@dataclass
class Quadrature:
    x: np.ndarray        # (nq, 2)
    weight: np.ndarray   # (nq,)
    cell: np.ndarray     # (nq,)
    kind: np.ndarray     # (nq,) FULL_GAUSS or SUBTRIANGLE
    skipped: int = 0

    def __len__(self):
        return len(self.weight)

    @property
    def cells(self):
        return np.unique(self.cell)

    @property
    def area(self):
        return float(self.weight.sum())


def build_quadrature(grid, phi, min_area=1e-3):
    """Integration points for the region ``phi <= 0``.

    Cut cells whose clipped area is below ``min_area * h**2`` are skipped
    and counted in ``Quadrature.skipped``.
    """
    h = grid.h
    kinds = grid.classify_cells(phi).ravel()
    inner = np.flatnonzero(kinds == INTERIOR)
    origin = grid.cell_origin(inner)
    g = np.array([[GAUSS[0], GAUSS[0]], [GAUSS[1], GAUSS[0]],
                  [GAUSS[1], GAUSS[1]], [GAUSS[0], GAUSS[1]]])
    xs = [(origin[:, None, :] + h * g[None]).reshape(-1, 2)]
    ws = [np.full(4 * len(inner), 0.25 * h * h)]
    cs = [np.repeat(inner, 4)]
    ks = [np.full(4 * len(inner), FULL_GAUSS, dtype=np.int8)]

    cut = np.flatnonzero(kinds == CUT)
    skipped = 0
    tx, tw, tc = [], [], []
    for cell, polys in zip(cut, interior_polygons(grid, phi, cut)):
        area = sum(polygon_area(p) for p in polys)
        if area < min_area * h * h:
            if area > 0:
                skipped += 1
            continue
        for poly in polys:
            c = poly.mean(axis=0)
            a = poly
            b = np.roll(poly, -1, axis=0)
            tri_area = 0.5 * ((a[:, 0] - c[0]) * (b[:, 1] - c[1])
                              - (a[:, 1] - c[1]) * (b[:, 0] - c[0]))
            keep = tri_area > 1e-12 * h * h
            tx.append((a[keep] + b[keep] + c) / 3.0)
            tw.append(tri_area[keep])
            tc.append(np.full(int(keep.sum()), cell))
    if tx:
        xs.append(np.concatenate(tx))
        ws.append(np.concatenate(tw))
        cs.append(np.concatenate(tc))
        ks.append(np.full(len(cs[-1]), SUBTRIANGLE, dtype=np.int8))
    if skipped:
        log.debug("quadrature: skipped %d sliver cells", skipped)
    return Quadrature(np.concatenate(xs), np.concatenate(ws), np.concatenate(cs),
                      np.concatenate(ks), skipped)


# --------------------------------------------------------- Q4 kinematics

def shape_functions(local):
    """Q4 shape values (n, 4) for local coordinates in [0, 1]^2."""
    s, t = local[:, 0], local[:, 1]
    return np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t], axis=-1)


def shape_gradients(local, h):
    """Physical shape gradients, shape (n, 4, 2)."""
    s, t = local[:, 0], local[:, 1]
    ds = np.stack([-(1 - t), 1 - t, t, -t], axis=-1)
    dt = np.stack([-(1 - s), -s, s, 1 - s], axis=-1)
    return np.stack([ds, dt], axis=-1) / h


def b_matrix(local, h):
    """Strain-displacement matrices (n, 3, 8) with dofs ordered (ux, uy) per node."""
    dN = shape_gradients(local, h)
    B = np.zeros((len(local), 3, 8))
    B[:, 0, 0::2] = dN[..., 0]
    B[:, 1, 1::2] = dN[..., 1]
    B[:, 2, 0::2] = dN[..., 1]
    B[:, 2, 1::2] = dN[..., 0]
    return B


def local_coords(grid, x, cells):
    return (x - grid.cell_origin(cells)) / grid.h


def element_stiffness(grid, cell, points, weights, material):
    """8x8 stiffness of one cell from its integration points."""
    cell = np.full(len(points), cell)
    B = b_matrix(local_coords(grid, np.asarray(points, float), cell), grid.h)
    return np.einsum("q,qai,ab,qbj->ij", np.asarray(weights, float), B, material.D, B)


# ---------------------------------------------------------------- dofs

class DofMap:
    """Global equation numbers for the nodes of every body's active cells."""

    def __init__(self, grid, active_cells):
        self.grid = grid
        self.node_dof = []
        self.active = []
        offset = 0
        for cells in active_cells:
            mask = np.zeros(grid.n_nodes, dtype=bool)
            if cells is not None and len(cells):
                mask[grid.cell_nodes(cells).ravel()] = True
            nd = np.full(grid.n_nodes, -1, dtype=np.int64)
            k = int(mask.sum())
            nd[mask] = offset + 2 * np.arange(k)
            offset += 2 * k
            self.node_dof.append(nd)
            self.active.append(mask)
        self.ndof = offset

    def cell_dofs(self, body, cells):
        """(n, 8) dofs of cells, -1 where a node has no unknowns."""
        nodes = self.grid.cell_nodes(cells)
        base = self.node_dof[body][nodes]
        out = np.empty(nodes.shape[:-1] + (8,), dtype=np.int64)
        out[..., 0::2] = base
        out[..., 1::2] = np.where(base >= 0, base + 1, -1)
        return out

    def nodal_field(self, body, u, fill=0.0):
        """Displacement of `body` as a (ny, nx, 2) array; missing nodes get `fill`."""
        nd = self.node_dof[body]
        out = np.full((self.grid.n_nodes, 2), fill, dtype=float)
        ok = nd >= 0
        out[ok, 0] = u[nd[ok]]
        out[ok, 1] = u[nd[ok] + 1]
        return out.reshape(self.grid.ny, self.grid.nx, 2)

    def node_mask(self, body):
        return self.active[body].reshape(self.grid.shape)


def assemble_stiffness(grid, quad, edofs, material, ndof):
    """Sparse global stiffness of one body; `edofs` is (nq, 8) per integration point."""
    B = b_matrix(local_coords(grid, quad.x, quad.cell), grid.h)
    ke = np.einsum("q,qai,ab,qbj->qij", quad.weight, B, material.D, B)
    rows = np.broadcast_to(edofs[:, :, None], ke.shape).ravel()
    cols = np.broadcast_to(edofs[:, None, :], ke.shape).ravel()
    return sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()


def internal_force(grid, quad, edofs, stress, ndof):
    """Sum of B^T sigma w over integration points; `edofs` is (nq, 8)."""
    B = b_matrix(local_coords(grid, quad.x, quad.cell), grid.h)
    fe = np.einsum("q,qai,qa->qi", quad.weight, B, stress)
    return np.bincount(edofs.ravel(), weights=fe.ravel(), minlength=ndof)


def strain_at(grid, x, cells, du_cell):
    """Voigt strain at points from (n, 8) nodal displacement of their cells."""
    B = b_matrix(local_coords(grid, x, cells), grid.h)
    return np.einsum("qai,qi->qa", B, du_cell)


# ------------------------------------------------------------- loading

def edge_load(grid, start, end, traction, dof_lookup, ndof, inward=None, order=3):
    """Consistent nodal forces of a traction applied along a straight edge.

    Parameters
    ----------
    start, end : point
        Edge end points.
    traction : callable
        ``traction(x, y) -> (tx, ty)`` evaluated on arrays.
    dof_lookup : callable
        ``dof_lookup(cells) -> (n, 8)`` dofs of one body.
    inward : 2-vector, optional
        Direction into the body, used to pick the body-side cell for points
        lying on grid lines.
    """
    a = np.asarray(start, float)
    b = np.asarray(end, float)
    L = np.linalg.norm(b - a)
    # split the edge at grid lines so each piece is polynomial
    cuts = [0.0, 1.0]
    for k in range(2):
        if abs(b[k] - a[k]) > 0:
            lines = grid.origin[k] + grid.h * np.arange(
                np.ceil((min(a[k], b[k]) - grid.origin[k]) / grid.h),
                np.floor((max(a[k], b[k]) - grid.origin[k]) / grid.h) + 1)
            cuts.extend((lines - a[k]) / (b[k] - a[k]))
    cuts = np.unique(np.clip(cuts, 0.0, 1.0))
    gp, gw = np.polynomial.legendre.leggauss(order)
    s0, s1 = cuts[:-1], cuts[1:]
    s = (0.5 * (s0 + s1))[:, None] + 0.5 * (s1 - s0)[:, None] * gp[None]
    w = (0.5 * (s1 - s0))[:, None] * gw[None] * L
    s, w = s.ravel(), w.ravel()
    keep = w > 0
    s, w = s[keep], w[keep]
    x = a + s[:, None] * (b - a)
    nudge = np.zeros(2) if inward is None else 1e-9 * grid.h * np.asarray(inward, float)
    cells, local = grid.locate(x + nudge)
    local = np.clip(local - nudge / grid.h, 0.0, 1.0)
    N, dofs = shape_with_dofs(shape_functions(local), dof_lookup(cells))
    tx, ty = traction(x[:, 0], x[:, 1])
    t = np.stack(np.broadcast_arrays(tx, ty), axis=-1) * w[:, None]
    fe = np.zeros((len(x), 8))
    fe[:, 0::2] = N * t[:, None, 0]
    fe[:, 1::2] = N * t[:, None, 1]
    ok = dofs >= 0
    return np.bincount(dofs[ok], weights=fe[ok], minlength=ndof)


def shape_with_dofs(N, dofs):
    """Drop shape weights of nodes without unknowns and renormalise the rest."""
    has = dofs[:, 0::2] >= 0
    N = np.where(has, N, 0.0)
    tot = N.sum(axis=1, keepdims=True)
    N = np.where(tot > 0, N / np.where(tot > 0, tot, 1.0), 0.0)
    return N, dofs


# -------------------------------------------------------- contact terms

@dataclass
class ContactSide:
    """How one body's displacement is sampled at the projected points."""

    dofs: np.ndarray      # (m, 8), -1 where no unknown
    N: np.ndarray         # (m, 4)
    prescribed: np.ndarray  # (m, 2) displacement not carried by unknowns

    @classmethod
    def deformable(cls, grid, dofmap, body, pts):
        cells, local = grid.locate(pts)
        dofs = dofmap.cell_dofs(body, cells)
        N, dofs = shape_with_dofs(shape_functions(local), dofs)
        return cls(dofs, N, np.zeros((len(pts), 2)))

    @classmethod
    def rigid(cls, motion):
        m = len(motion)
        return cls(np.full((m, 8), -1, dtype=np.int64), np.zeros((m, 4)), np.asarray(motion, float))

    def gather(self, u):
        ue = np.where(self.dofs >= 0, u[np.maximum(self.dofs, 0)], 0.0)
        return self.displacement(ue)

    def displacement(self, ue):
        return self.prescribed + np.stack([np.einsum("mk,mk->m", self.N, ue[:, 0::2]),
                                           np.einsum("mk,mk->m", self.N, ue[:, 1::2])], axis=-1)


@dataclass
class ContactBlock:
    """A contact pair bundled with its kinematics and friction law."""

    pair: object
    side_i: ContactSide
    side_j: ContactSide
    law: object

    @property
    def dofs(self):
        return np.concatenate([self.side_i.dofs, self.side_j.dofs], axis=1)

    def local_u(self, u):
        d = self.dofs
        return np.where(d >= 0, u[np.maximum(d, 0)], 0.0)

    def update(self, u):
        """Gaps and return-mapped tractions at displacement `u`; returns new slip."""
        evaluate_gaps(self.pair, self.side_i.gather(u), self.side_j.gather(u))
        return update_tractions(self.pair, self.law)

    def point_forces(self, ul, frozen=True):
        """Contact force per point, dgamma (tau_n n + tau_t t), for local dofs `ul`.

        With ``frozen`` the stick/slip branch, slip direction, activity and
        plastic slip stay at the values of the last `update`, which makes
        the map linear in `ul`.
        """
        p = self.pair
        du_i = self.side_i.displacement(ul[:, :8])
        du_j = self.side_j.displacement(ul[:, 8:])
        jump = du_j - du_i
        g_n = p.g_n0 + np.einsum("nd,nd->n", jump, p.n)
        g_t = p.g_t_offset + np.einsum("nd,nd->n", jump, p.t)
        if frozen:
            tau_n = g_n / self.law.eps_n
            sign = np.sign(p.g_t - p.g_t_plastic)
            tau_t = np.where(p.slip, -sign * self.law.mu * tau_n,
                             (g_t - p.g_t_plastic) / self.law.eps_t)
            active = p.active
        else:
            tau_n, tau_t, _, _ = return_map(g_n, g_t, p.g_t_plastic, self.law)
            active = tau_n < 0
        F = tau_n[:, None] * p.n + tau_t[:, None] * p.t
        return np.where(active[:, None], p.weight[:, None] * F, 0.0)

    def local_residual(self, F):
        """(m, 16) residual contributions: body i gets -N_i F, body j +N_j F."""
        r = np.zeros((len(F), 16))
        Ni, Nj = self.side_i.N, self.side_j.N
        r[:, 0:8:2] = -Ni * F[:, None, 0]
        r[:, 1:8:2] = -Ni * F[:, None, 1]
        r[:, 8::2] = Nj * F[:, None, 0]
        r[:, 9::2] = Nj * F[:, None, 1]
        return r

    def residual(self, u, ndof):
        F = self.point_forces(self.local_u(u))
        r = self.local_residual(F)
        d = self.dofs
        ok = d >= 0
        return np.bincount(d[ok], weights=r[ok], minlength=ndof)

    def jacobian_fd(self, u):
        """Per-point (m, 16, 16) forward-difference Jacobian of the contact residual."""
        ul = self.local_u(u)
        r0 = self.local_residual(self.point_forces(ul))
        J = np.zeros((len(ul), 16, 16))
        valid = self.dofs >= 0
        for q in range(16):
            if not np.any(valid[:, q]):
                continue
            uq = np.abs(ul[:, q])
            with np.errstate(divide="ignore"):
                hbar = np.where(uq > 0, CBRT_EPS / uq, CBRT_EPS)
            hbar = np.maximum(CBRT_EPS, hbar)
            up = ul.copy()
            up[:, q] += hbar
            J[:, :, q] = (self.local_residual(self.point_forces(up)) - r0) / hbar[:, None]
        return J

    def jacobian_analytic(self):
        """Closed-form tangent of the frozen-branch contact residual."""
        p = self.pair
        m = len(p)
        G = np.zeros((m, 2, 16))
        G[:, 0, 0:8:2] = -self.side_i.N
        G[:, 1, 1:8:2] = -self.side_i.N
        G[:, 0, 8::2] = self.side_j.N
        G[:, 1, 9::2] = self.side_j.N
        n, t = p.n, p.t
        nn = np.einsum("mi,mj->mij", n, n)
        sign = np.sign(p.g_t - p.g_t_plastic)
        stick = nn / self.law.eps_n + np.einsum("mi,mj->mij", t, t) / self.law.eps_t
        slip = np.einsum("mi,mj->mij", n - (sign * self.law.mu)[:, None] * t, n) / self.law.eps_n
        C = np.where(p.slip[:, None, None], slip, stick)
        C = np.where(p.active[:, None, None], C, 0.0) * p.weight[:, None, None]
        return np.einsum("mai,mab,mbj->mij", G, C, G)

    def triplets(self, J):
        d = self.dofs
        rows = np.broadcast_to(d[:, :, None], J.shape)
        cols = np.broadcast_to(d[:, None, :], J.shape)
        ok = (rows >= 0) & (cols >= 0) & (J != 0)
        return J[ok], rows[ok], cols[ok]

    def assemble(self, J, ndof):
        v, r, c = self.triplets(J)
        return sp.coo_matrix((v, (r, c)), shape=(ndof, ndof)).tocsr()


# --------------------------------------------------------------- newton

@dataclass
class NewtonResult:
    u: np.ndarray
    residual: np.ndarray
    iterations: int
    history: list


PIVOT_RTOL = 1e-13
MIN_STEP = 1.0 / 64


def _solve(T, rhs):
    # symmetric Jacobi scaling: nodes with little cut-cell support would
    # otherwise dominate the pivot range
    d = np.abs(T.diagonal())
    d[d == 0] = 1.0
    s = 1.0 / np.sqrt(d)
    S = sp.diags(s)
    Ts = (S @ T @ S).tocsc()
    try:
        # the pattern is symmetric and the scaled diagonal is well away from
        # zero, so a symmetric ordering with weak diagonal pivoting is cheaper
        lu = splu(Ts, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.1,
                  options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise SingularTangentError(
            f"singular tangent ({T.shape[0]} free dofs, zero rows: "
            f"{int(np.count_nonzero(np.diff(T.tocsr().indptr) == 0))}): {exc}") from None
    piv = np.abs(lu.U.diagonal())
    # rigid-body modes survive rounding as tiny pivots rather than exact zeros
    if piv.size and piv.min() <= PIVOT_RTOL * piv.max():
        raise SingularTangentError(
            f"singular tangent: pivot ratio {piv.min() / piv.max():.3g} over "
            f"{T.shape[0]} free dofs (an unconstrained or floating body?)")
    x = s * lu.solve(s * rhs)
    if not np.all(np.isfinite(x)):
        raise SingularTangentError("linear solve produced non-finite values")
    return x


def newton_solve(K, f_const, fixed, u_fixed, blocks=(), tol_abs=0.0, tol_rel=1e-8,
                 max_iter=50, on_iteration=None, slip_update="step", line_search=True):
    """Solve ``K u + f_const + r_c(u) = 0`` on the free dofs.

    Parameters
    ----------
    K : sparse matrix
        Bulk stiffness over all dofs.
    f_const : ndarray
        Displacement-independent part of the residual (internal force of the
        carried stresses minus external loads).
    fixed : ndarray of bool
        Prescribed dofs.
    u_fixed : ndarray
        Full-length vector whose entries on `fixed` are the prescribed values.
    blocks : sequence of ContactBlock
        Contact pairs.
    slip_update : {"iteration", "step"}
        With "iteration" each Newton iteration starts its return map from
        the plastic slip left by the previous iteration; with "step" every
        iteration starts from the slip at the beginning of the load step.
    line_search : bool
        Backtrack (halving, down to 1/64) when a full step fails to reduce
        the residual.

    Returns
    -------
    NewtonResult
        ``iterations`` counts linear solves.
    """
    if slip_update not in ("iteration", "step"):
        raise ValueError(f"unknown slip update {slip_update!r}")
    ndof = K.shape[0]
    u = np.zeros(ndof)
    u[fixed] = np.asarray(u_fixed, dtype=float)[fixed]
    free = ~fixed
    K = K.tocsr()

    def evaluate(u):
        slips = [b.update(u) for b in blocks]
        r = K @ u + f_const
        for b in blocks:
            r += b.residual(u, ndof)
        return r, slips

    history = []
    r0 = None
    r, new_slip = evaluate(u)
    for k in range(max_iter + 1):
        rn = float(np.linalg.norm(r[free]))
        if not np.isfinite(rn):
            raise ConvergenceError("residual became non-finite", history + [rn])
        history.append(rn)
        r0 = rn if r0 is None else r0
        active = sum(int(b.pair.active.sum()) for b in blocks)
        if on_iteration is not None:
            on_iteration(k, rn, active)
        log.debug("newton iteration %d: |r| = %.6e, active points %d", k, rn, active)
        # at least one linear solve, so an unloaded step still reports one
        # iteration and a singular system is never accepted silently
        if k > 0 and rn <= max(tol_abs, tol_rel * r0):
            for b, gp in zip(blocks, new_slip):
                b.pair.g_t_plastic = gp
            return NewtonResult(u, r, k, history)
        if k == max_iter:
            break
        Kc = K.tocoo()
        parts = [(Kc.data, Kc.row, Kc.col)]
        parts += [b.triplets(b.jacobian_fd(u)) for b in blocks if len(b.pair)]
        v, rows, cols = (np.concatenate(a) for a in zip(*parts))
        T = sp.coo_matrix((v, (rows, cols)), shape=(ndof, ndof)).tocsr()[free][:, free]
        du = _solve(T, -r[free])
        if slip_update == "iteration":
            for b, gp in zip(blocks, new_slip):
                b.pair.g_t_plastic = gp
        # the first step carries the prescribed displacements and may raise
        # the residual; later steps must beat the larger of the last two
        # residuals, which breaks the two-cycles of active-set chatter
        ref = max(history[-2:])
        alpha = 1.0
        while True:
            trial = u.copy()
            trial[free] += alpha * du
            r, new_slip = evaluate(trial)
            if (not line_search or k == 0 or alpha <= MIN_STEP
                    or np.linalg.norm(r[free]) < (1 - 1e-4 * alpha) * ref):
                break
            alpha *= 0.5
        if alpha < 1.0:
            log.debug("newton iteration %d: step length %.4g", k, alpha)
        u = trial
    raise ConvergenceError(
        f"Newton did not converge in {max_iter} iterations "
        f"(|r| history: {', '.join(f'{v:.3e}' for v in history[-5:])})", history)


def reactions(residual, dofs):
    """Force exerted by the body on its supports at the given prescribed dofs."""
    return -residual[dofs]
