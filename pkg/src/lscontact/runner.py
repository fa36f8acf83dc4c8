"""Load-step driver for scenarios.

Each step: find contact pairs and their reference surfaces, carry over
plastic slip, solve for the displacement increment, move the material
points, extend the increment off each body, advect and reinitialize the
level sets, rebuild the integration points and project the stresses onto
them.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .contact import (ContactPair, build_intermediate_surface, contact_region,
                      transfer_plastic_history, write_pair_csv, FrictionLaw)
from .grid import Grid
from .levelset import Circle, Polygon, Rectangle, advect, extrapolate, init_primitive, reinitialize
from .mechanics import (ContactBlock, ContactSide, DofMap, Material, assemble_stiffness,
                        build_quadrature, edge_load, internal_force, newton_solve,
                        ConvergenceError)
from .mpm import (MlsConfig, confine_to_points, project_state, seed_points, update_points,
                  write_points_csv)
from .output import append_jsonl, splat_to_nodes, stress_invariants, write_table, write_vtk
from .scenario import PhaseSpec, ScenarioError, output_dir

log = logging.getLogger(__name__)

EXTENSION_BAND = 6.0
MAX_CUTS = 3            # a failing step is retried as up to 2**3 substeps
CONFINE = 1.0           # level sets may reach this many h beyond their material points


class StepError(RuntimeError):
    def __init__(self, msg, report):
        super().__init__(msg)
        self.report = report


def _rotation(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def apply_affine(shape, R, t):
    """Image of a shape under ``x -> R x + t``."""
    if isinstance(shape, Circle):
        return Circle(tuple(R @ np.asarray(shape.center) + t), shape.radius)
    if isinstance(shape, Rectangle):
        if np.allclose(R, np.eye(2)):
            return Rectangle(tuple(np.asarray(shape.lower) + t), tuple(np.asarray(shape.upper) + t))
        shape = shape.as_polygon()
    return Polygon(tuple(map(tuple, shape.array @ R.T + t)))


class Body:
    """Runtime state of one body."""

    def __init__(self, spec, index, grid, inflate=0.0):
        self.spec = spec
        self.name = spec.name
        self.index = index
        self.rigid = spec.rigid
        self.material = None if self.rigid else Material(spec.E, spec.nu)
        self.R = np.eye(2)
        self.t = np.zeros(2)
        self.phi = init_primitive(spec.shape, grid)
        grow = (spec.inflate + inflate) * grid.h
        if grow and not self.rigid:
            self.phi = reinitialize(grid, self.phi - grow)
        self.quad = None
        self.stress_q = None
        self.points = None

    def move_rigid(self, grid, motion):
        """Compose an increment (rotation about pivot, then translation)."""
        Ri = _rotation(motion.rotation)
        p = np.asarray(motion.pivot, float)
        self.R = Ri @ self.R
        self.t = Ri @ (self.t - p) + p + np.asarray(motion.translation, float)
        self.phi = init_primitive(apply_affine(self.spec.shape, self.R, self.t), grid)

    @staticmethod
    def rigid_increment(motion, x):
        Ri = _rotation(motion.rotation)
        p = np.asarray(motion.pivot, float)
        return (x - p) @ Ri.T + p + np.asarray(motion.translation, float) - x


@dataclass
class StepReport:
    step: int
    phase: str
    iterations: int
    residuals: list
    pairs: list = field(default_factory=list)
    reactions: dict = field(default_factory=dict)
    wall_time: float = 0.0
    imbalance: list = field(default_factory=list)
    tolerance: float = 0.0
    substeps: int = 1

    def as_dict(self):
        return dict(self.__dict__)


class Simulation:
    """Runs a Scenario step by step.

    Parameters
    ----------
    scenario : Scenario
    out : path, optional
        Output directory; nothing is written when ``write=False``.
    advect_scheme : {"weno5", "upwind"}, optional
        Overrides the scenario setting.
    """

    def __init__(self, scenario, out=None, write=True, advect_scheme=None):
        self.scn = scenario
        self.grid = Grid.from_extent(*scenario.domain, scenario.h)
        self.h = self.grid.h
        self.write = write
        self.out = output_dir(scenario, out) if write else None
        self.advect_scheme = advect_scheme or scenario.advect
        deformable = [b.E for b in scenario.bodies if not b.rigid]
        self.mean_modulus = float(np.mean(deformable))
        self.law = FrictionLaw.from_mesh(scenario.mu, self.h, self.mean_modulus, scenario.eps0)
        self.tol_abs = 1e-12 * self.mean_modulus * self.h
        self.mls = MlsConfig(self.h)
        self.bodies = [Body(b, k, self.grid, scenario.preconsolidate or 0.0)
                       for k, b in enumerate(scenario.bodies)]
        self.pairs = {}
        self.reports = []
        self.curves = []
        self.step_index = 0
        self.last = None
        for b in self.bodies:
            if not b.rigid:
                self._rebuild(b)
                b.points = seed_points(b.quad, b.index)
                b.stress_q = np.zeros((len(b.quad), 3))
        if self.write:
            self.out.mkdir(parents=True, exist_ok=True)
            (self.out / "steps.jsonl").write_text("")

    # ---------------------------------------------------------------- setup

    def _rebuild(self, body):
        body.quad = build_quadrature(self.grid, body.phi)
        if len(body.quad) == 0:
            raise ScenarioError(f"body {body.name!r} has no integration points")

    def body(self, name):
        for b in self.bodies:
            if b.name == name:
                return b
        raise KeyError(name)

    def _bbox(self, body, level):
        return self.grid.window(body.phi < level, margin=1)

    def detect_pairs(self):
        """Contact pairs for the current geometry, history carried over."""
        shift = self.scn.shift * self.h
        boxes = [self._bbox(b, shift) for b in self.bodies]
        grads = {}
        out = {}
        for i, bi in enumerate(self.bodies):
            for j in range(i + 1, len(self.bodies)):
                bj = self.bodies[j]
                if bi.rigid and bj.rigid:
                    continue
                a, b = boxes[i], boxes[j]
                if a is None or b is None:
                    continue
                if (a[0].start >= b[0].stop or b[0].start >= a[0].stop
                        or a[1].start >= b[1].stop or b[1].start >= a[1].stop):
                    continue
                region = contact_region(self.grid, bi.phi, bj.phi, shift)
                close = np.maximum(bi.phi, bj.phi) <= shift
                if not (region.any() or close.any()):
                    continue
                for k in (i, j):
                    if k not in grads:
                        grads[k] = self.grid.nodal_gradient(self.bodies[k].phi)
                pair = build_intermediate_surface(self.grid, bi.phi, bj.phi, region, i, j, shift,
                                                  grads[i], grads[j])
                if len(pair) == 0:
                    continue
                transfer_plastic_history(self.pairs.get((i, j)), pair,
                                         self.scn.history_radius * self.h)
                out[(i, j)] = pair
        return out

    # ----------------------------------------------------------------- step

    def step(self, phase, label=None):
        """Advance one load step.

        When Newton fails to converge the increment is retried as two
        halves, recursively up to `MAX_CUTS` levels.  The report then sums
        the iterations and residual histories of the substeps and takes
        forces and tolerances from the last one.
        """
        t0 = time.perf_counter()
        self.step_index += 1
        try:
            report = self._cut(phase, label or phase.name, 0)
        except StepError as exc:
            exc.report.wall_time = time.perf_counter() - t0
            self._emit(exc.report)
            raise
        report.wall_time = time.perf_counter() - t0
        self.reports.append(report)
        self._emit(report, self.pairs)
        log.info("step %d (%s): %d iterations, |r| = %.3e, %d pairs, %.2fs", self.step_index,
                 report.phase, report.iterations, report.residuals[-1], len(self.pairs),
                 report.wall_time)
        return report

    def _cut(self, phase, label, depth):
        try:
            return self._increment(phase, label)
        except StepError as exc:
            if depth >= MAX_CUTS or not isinstance(exc.__cause__, ConvergenceError):
                raise
            log.warning("step %d: %s; retrying as two half increments", self.step_index,
                        exc.__cause__)
        half = phase.scaled(0.5)
        first = self._cut(half, label, depth + 1)
        second = self._cut(half, label, depth + 1)
        second.iterations += first.iterations
        second.residuals = first.residuals + second.residuals
        second.substeps += first.substeps
        return second

    def _increment(self, phase, label):
        grid = self.grid
        pairs = self.detect_pairs()
        dm = DofMap(grid, [None if b.rigid else b.quad.cells for b in self.bodies])
        ndof = dm.ndof
        K = sp.csr_matrix((ndof, ndof))
        f = np.zeros(ndof)
        for b in self.bodies:
            if b.rigid:
                continue
            ed = dm.cell_dofs(b.index, b.quad.cell)
            K = K + assemble_stiffness(grid, b.quad, ed, b.material, ndof)
            f += internal_force(grid, b.quad, ed, b.stress_q, ndof)
            for load in b.spec.loads:
                f -= phase.load_factor * edge_load(
                    grid, load.start, load.end, load,
                    lambda cells, k=b.index: dm.cell_dofs(k, cells), ndof, load.inward)

        fixed = np.zeros(ndof, dtype=bool)
        u_fixed = np.zeros(ndof)
        support_dofs = {}
        nodes_xy = grid.nodes().reshape(-1, 2)
        for b in self.bodies:
            if b.rigid:
                continue
            nd = dm.node_dof[b.index]
            for s in b.spec.supports:
                x0, x1, y0, y1 = s.box
                sel = ((nd >= 0) & (nodes_xy[:, 0] >= x0) & (nodes_xy[:, 0] <= x1)
                       & (nodes_xy[:, 1] >= y0) & (nodes_xy[:, 1] <= y1))
                inc = phase.supports.get(s.name, (0.0, 0.0))
                dofs = []
                for c in range(2):
                    if s.mask()[c]:
                        d = nd[sel] + c
                        fixed[d] = True
                        u_fixed[d] = inc[c]
                        dofs.append(d)
                support_dofs[s.name] = (np.concatenate(dofs) if dofs else np.empty(0, int),
                                        s.mask())

        blocks = []
        for (i, j), pair in pairs.items():
            sides = []
            for k, pts in ((i, pair.p_i), (j, pair.p_j)):
                bk = self.bodies[k]
                if bk.rigid:
                    motion = phase.motions.get(bk.name)
                    inc = (np.zeros_like(pts) if motion is None
                           else Body.rigid_increment(motion, pts))
                    sides.append(ContactSide.rigid(inc))
                else:
                    sides.append(ContactSide.deformable(grid, dm, k, pts))
            blocks.append(ContactBlock(pair, sides[0], sides[1], self.law))

        report = StepReport(self.step_index, label, 0, [])
        try:
            res = newton_solve(K, f, fixed, u_fixed, blocks, tol_abs=self.tol_abs,
                               tol_rel=self.scn.tol_rel, max_iter=self.scn.max_iter,
                               slip_update=self.scn.slip_update)
        except Exception as exc:
            report.residuals = list(getattr(exc, "history", []))
            raise StepError(f"step {self.step_index}: {exc}", report) from exc
        report.iterations = res.iterations
        report.residuals = res.history
        report.tolerance = max(self.tol_abs, self.scn.tol_rel * res.history[0])
        free = ~fixed
        report.imbalance = [float(res.residual[0::2][free[0::2]].sum()),
                            float(res.residual[1::2][free[1::2]].sum())]
        for name, (dofs, mask) in support_dofs.items():
            rx = -res.residual[dofs[(dofs % 2) == 0]].sum() if mask[0] else 0.0
            ry = -res.residual[dofs[(dofs % 2) == 1]].sum() if mask[1] else 0.0
            report.reactions[name] = [float(rx), float(ry)]
        for (i, j), pair in pairs.items():
            report.pairs.append(self._pair_summary(pair))

        self.last = dict(u=res.u, dofmap=dm, pairs=pairs, blocks=blocks, residual=res.residual,
                         support_dofs=support_dofs)
        self._advance(phase, dm, res.u)
        self.pairs = pairs
        return report

    def _pair_summary(self, pair):
        bi, bj = self.bodies[pair.i], self.bodies[pair.j]
        act = pair.active
        f_i = pair.force_on(pair.i)
        f_j = pair.force_on(pair.j)
        return dict(i=bi.name, j=bj.name, points=len(pair), active=int(act.sum()),
                    slip=int(pair.slip.sum()), dropped=pair.dropped,
                    force_on_i=f_i.tolist(), force_on_j=f_j.tolist(),
                    normal=float(np.sum(pair.weight[act] * -pair.tau_n[act])),
                    tangential=float(np.sum(pair.weight[act] * np.abs(pair.tau_t[act]))))

    def _advance(self, phase, dm, u):
        grid = self.grid
        for b in self.bodies:
            if b.rigid:
                motion = phase.motions.get(b.name)
                if motion is not None:
                    b.move_rigid(grid, motion)
                continue
            du = dm.nodal_field(b.index, u)
            du = extrapolate(grid, b.phi, du, known=dm.node_mask(b.index),
                             band=EXTENSION_BAND * self.h)
            b.points = update_points(grid, b.points, du, b.material)
            b.phi = reinitialize(grid, advect(grid, b.phi, du, scheme=self.advect_scheme))
            b.phi, cut = confine_to_points(grid, b.phi, b.points.x, CONFINE * self.h)
            if cut:
                log.warning("body %s: %d level-set node(s) more than %.3g h from any material "
                            "point moved outside", b.name, cut, CONFINE)
                b.phi = reinitialize(grid, b.phi)
            self._rebuild(b)
            b.stress_q = project_state(b.points, b.quad, self.mls)

    # -------------------------------------------------------------- outputs

    def _emit(self, report, pairs=None):
        if not self.write:
            return
        append_jsonl(self.out / "steps.jsonl", report.as_dict())
        if pairs is None:
            return
        every = int(self.scn.output.get("every", 1))
        last = self.step_index == self._planned_steps
        if not (self.step_index % every == 0 or last):
            return
        tag = f"{self.step_index:04d}"
        if self.scn.output.get("tractions", True):
            for (i, j), pair in pairs.items():
                write_pair_csv(self.out / f"contact_{self.bodies[i].name}_{self.bodies[j].name}"
                                          f"_{tag}.csv", pair)
        if self.scn.output.get("points", True):
            write_points_csv(self.out / f"points_{tag}.csv",
                             [b.points for b in self.bodies if not b.rigid])
        if self.scn.output.get("vtk", True):
            for b in self.bodies:
                scalars = {"phi": b.phi}
                vectors = {}
                if not b.rigid:
                    d = self.last["dofmap"]
                    vectors["u"] = d.nodal_field(b.index, self.last["u"])
                    s = splat_to_nodes(self.grid, b.points.x, b.points.stress, b.points.volume)
                    mean, smax, vm = stress_invariants(s)
                    scalars.update(mean_stress=np.nan_to_num(mean),
                                   max_principal=np.nan_to_num(smax),
                                   von_mises=np.nan_to_num(vm))
                write_vtk(self.out / f"{b.name}_{tag}.vtk", self.grid, scalars, vectors)

    _planned_steps = 0

    def loading_curve_row(self, report):
        row = [report.step]
        for name in sorted(report.reactions):
            row += report.reactions[name]
        for body in self.scn.monitor.get("bodies", []):
            n, t = self.contact_forces(body)
            row += [n, t]
        return row

    def contact_forces(self, body_name, report=None):
        """Normal and tangential contact force sums over pairs involving a body."""
        report = report or self.reports[-1]
        n = t = 0.0
        for p in report.pairs:
            if body_name in (p["i"], p["j"]):
                n += p["normal"]
                t += p["tangential"]
        return n, t

    # -------------------------------------------------------------- driving

    def preconsolidate(self):
        """Equilibrate the inflated configuration, then reset stresses."""
        rest = PhaseSpec("preconsolidate", 1)
        self.step(rest, label="preconsolidate")
        for b in self.bodies:
            if not b.rigid:
                b.points = seed_points(b.quad, b.index)
                b.stress_q = np.zeros((len(b.quad), 3))
        for pair in self.pairs.values():
            pair.g_t_plastic[:] = 0.0
            pair.g_t[:] = 0.0

    def run(self):
        self._planned_steps = self.scn.total_steps + (1 if self.scn.preconsolidate else 0)
        if self.scn.preconsolidate is not None:
            self.preconsolidate()
        for phase in self.scn.phases:
            for _ in range(phase.steps):
                report = self.step(phase)
                self.curves.append(self.loading_curve_row(report))
        if self.write:
            cols = ["step"]
            for name in sorted(self.reports[-1].reactions) if self.reports else []:
                cols += [f"{name}_fx", f"{name}_fy"]
            for body in self.scn.monitor.get("bodies", []):
                cols += [f"{body}_normal", f"{body}_tangential"]
            write_table(self.out / "loading_curve.csv", cols, self.curves)
        return self.reports


def run(scenario, out=None, write=True, advect_scheme=None):
    sim = Simulation(scenario, out=out, write=write, advect_scheme=advect_scheme)
    sim.run()
    return sim


def reaction_force(sim, face, report=None):
    """Force the body exerts on the support named `face` (last step by default)."""
    report = report or sim.reports[-1]
    if face not in report.reactions:
        raise ScenarioError(f"untagged face {face!r}")
    return np.array(report.reactions[face])


def contact_traction_profile(pair, active_only=True):
    """Points of a pair ordered along the surface.

    Returns a structured array with fields ``s`` (arc coordinate from the
    first point), ``x``, ``y``, ``tau_n``, ``tau_t``.  Ordering follows the
    principal direction of the point cloud, which suits the open, nearly
    straight surfaces of single contacts.
    """
    sel = pair.active if active_only else np.ones(len(pair), dtype=bool)
    x = pair.x[sel]
    dtype = [("s", float), ("x", float), ("y", float), ("tau_n", float), ("tau_t", float)]
    if len(x) == 0:
        return np.zeros(0, dtype=dtype)
    c = x - x.mean(axis=0)
    axis = np.linalg.svd(c, full_matrices=False)[2][0] if len(x) > 1 else np.array([1.0, 0.0])
    if axis[np.argmax(np.abs(axis))] < 0:
        axis = -axis
    order = np.argsort(c @ axis, kind="stable")
    xs = x[order]
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(xs, axis=0), axis=1))])
    out = np.zeros(len(xs), dtype=dtype)
    out["s"], out["x"], out["y"] = s, xs[:, 0], xs[:, 1]
    out["tau_n"] = pair.tau_n[sel][order]
    out["tau_t"] = pair.tau_t[sel][order]
    return out
