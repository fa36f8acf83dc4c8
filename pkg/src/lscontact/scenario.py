"""Scenario files: TOML description of bodies, supports, loads and phases.

A scenario file looks like::

    name = "hertz"
    [grid]
    h = 0.1
    domain = [-12.0, 12.0, -5.0, 5.0]     # xmin, xmax, ymin, ymax
    [contact]
    mu = 0.5
    eps0 = 1.0           # penalty factor
    shift = 1.5          # contact-region shift, in units of h
    [[bodies]]
    name = "block"
    E = 1.0e4
    nu = 0.3
    shape = { type = "rectangle", lower = [-10, -4], upper = [10, 0] }
    [[bodies.supports]]
    name = "bottom"
    box = [-11, 11, -4.05, -3.95]
    components = "xy"
    [[phases]]
    steps = 1
    supports = { top = [0.03, -0.04] }   # displacement increment per step

Lengths, moduli and forces only need to be mutually consistent.
"""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .levelset import Circle, Polygon, Rectangle, circular_cap

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ScenarioError(ValueError):
    pass


SAFE_NAMES = {k: getattr(np, k) for k in (
    "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "pi", "minimum", "maximum", "where")}


def compile_expression(text):
    """Turn an expression in ``x``, ``y`` into a vectorised callable."""
    try:
        code = compile(str(text), "<expression>", "eval")
    except SyntaxError as exc:
        raise ScenarioError(f"bad expression {text!r}: {exc.msg}") from None
    for name in code.co_names:
        if name not in SAFE_NAMES and name not in ("x", "y"):
            raise ScenarioError(f"expression {text!r} uses unknown name {name!r}")

    def f(x, y):
        val = eval(code, {"__builtins__": {}}, {**SAFE_NAMES, "x": x, "y": y})
        return np.broadcast_to(np.asarray(val, dtype=float), np.shape(x))
    return f


@dataclass
class SupportSpec:
    name: str
    box: tuple
    components: str = "xy"

    def mask(self):
        return np.array(["x" in self.components, "y" in self.components])


@dataclass
class LoadSpec:
    name: str
    start: tuple
    end: tuple
    traction: tuple
    inward: tuple | None = None

    def __post_init__(self):
        self._fx = compile_expression(self.traction[0])
        self._fy = compile_expression(self.traction[1])

    def __call__(self, x, y):
        return self._fx(x, y), self._fy(x, y)


@dataclass
class BodySpec:
    name: str
    shape: object
    E: float = 1.0
    nu: float = 0.0
    rigid: bool = False
    inflate: float = 0.0
    supports: list = field(default_factory=list)
    loads: list = field(default_factory=list)


@dataclass
class Motion:
    translation: tuple = (0.0, 0.0)
    rotation: float = 0.0
    pivot: tuple = (0.0, 0.0)


@dataclass
class PhaseSpec:
    name: str
    steps: int
    supports: dict = field(default_factory=dict)
    motions: dict = field(default_factory=dict)
    load_factor: float = 1.0

    def scaled(self, s):
        """Same phase with every prescribed increment multiplied by `s`.

        Loads are totals, not increments, so the load factor is kept.
        """
        def mul(v):
            return tuple((s * np.asarray(v, float)).tolist())

        motions = {k: Motion(mul(m.translation), s * m.rotation, m.pivot)
                   for k, m in self.motions.items()}
        supports = {k: mul(v) for k, v in self.supports.items()}
        return PhaseSpec(self.name, self.steps, supports, motions, self.load_factor)


@dataclass
class Scenario:
    name: str
    h: float
    domain: tuple
    bodies: list
    phases: list
    description: str = ""
    mu: float = 0.0
    eps0: float = 1.0
    shift: float = 1.5
    history_radius: float = 2.0
    tol_rel: float = 1e-8
    max_iter: int = 50
    advect: str = "weno5"
    slip_update: str = "step"
    preconsolidate: float | None = None
    output: dict = field(default_factory=dict)
    monitor: dict = field(default_factory=dict)
    source: str | None = None

    @property
    def total_steps(self):
        return sum(p.steps for p in self.phases)

    def body_index(self, name):
        for k, b in enumerate(self.bodies):
            if b.name == name:
                return k
        raise ScenarioError(f"unknown body {name!r}")

    def support(self, name):
        for b in self.bodies:
            for s in b.supports:
                if s.name == name:
                    return s
        raise ScenarioError(f"untagged face {name!r}: no support with that name")

    def truncated(self, steps):
        """Copy of the scenario limited to the first `steps` load steps."""
        phases, left = [], steps
        for p in self.phases:
            if left <= 0:
                break
            phases.append(PhaseSpec(p.name, min(p.steps, left), p.supports, p.motions,
                                    p.load_factor))
            left -= p.steps
        out = Scenario(**{**self.__dict__, "phases": phases})
        return out


# --------------------------------------------------------------- parsing

def _pair(v, what):
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ScenarioError(f"{what}: expected a pair of numbers, got {v!r}")
    return (float(v[0]), float(v[1]))


def read_vertex_file(path):
    """Polygon vertices from a text file with one ``x y`` pair per line."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 2:
        raise ScenarioError(f"{path}: expected two columns")
    return data


def _shape(spec, where, base):
    kind = spec.get("type")
    if kind == "circle":
        shape = Circle(_pair(spec["center"], f"{where}.center"), float(spec["radius"]))
    elif kind == "rectangle":
        shape = Rectangle(_pair(spec["lower"], f"{where}.lower"),
                          _pair(spec["upper"], f"{where}.upper"))
    elif kind == "polygon":
        if "file" in spec:
            p = Path(spec["file"])
            if not p.is_absolute() and base is not None:
                p = Path(base) / p
            verts = read_vertex_file(p)
        else:
            verts = np.asarray(spec["vertices"], dtype=float)
        shape = Polygon(tuple(map(tuple, verts)))
    elif kind == "cap":
        shape = circular_cap(_pair(spec["center"], f"{where}.center"), float(spec["radius"]),
                             float(spec["cut"]), spec.get("side", "below") == "below",
                             spec.get("spacing"))
    else:
        raise ScenarioError(f"{where}: unknown shape type {kind!r}")
    tr = spec.get("transform")
    if tr:
        shape = _transform(shape, tr, where)
    return shape


def _transform(shape, tr, where):
    scale = float(tr.get("scale", 1.0))
    angle = math.radians(float(tr.get("rotate_deg", 0.0)))
    about = np.asarray(_pair(tr.get("about", [0.0, 0.0]), f"{where}.about"))
    move = np.asarray(_pair(tr.get("translate", [0.0, 0.0]), f"{where}.translate"))
    if isinstance(shape, Circle):
        c = about + scale * (np.asarray(shape.center) - about)
        return Circle(tuple(c + move), shape.radius * scale)
    if isinstance(shape, Rectangle):
        shape = shape.as_polygon()
    v = about + scale * (shape.array - about)
    return Polygon(tuple(map(tuple, v))).moved(tuple(move), angle, tuple(about))


def _phase(spec, k, scn_bodies):
    supports = {n: _pair(v, f"phases[{k}].supports.{n}") for n, v in spec.get("supports", {}).items()}
    motions = {}
    for n, m in spec.get("motions", {}).items():
        if "rotation" in m and "rotation_deg" in m:
            raise ScenarioError(f"phases[{k}].motions.{n}: give rotation (rad) or rotation_deg, "
                                "not both")
        angle = float(m["rotation"]) if "rotation" in m else \
            math.radians(float(m.get("rotation_deg", 0.0)))
        motions[n] = Motion(_pair(m.get("translation", [0.0, 0.0]), f"phases[{k}].motions.{n}"),
                            angle,
                            _pair(m.get("pivot", [0.0, 0.0]), f"phases[{k}].motions.{n}.pivot"))
    return PhaseSpec(spec.get("name", f"phase{k}"), int(spec.get("steps", 1)), supports, motions,
                     float(spec.get("load_factor", 1.0)))


def parse_scenario(data, source=None):
    """Build a Scenario from a parsed TOML mapping."""
    base = None if source is None else str(Path(source).parent)
    try:
        grid = data["grid"]
        bodies = []
        for k, b in enumerate(data.get("bodies", [])):
            where = f"bodies[{k}]"
            supports = [SupportSpec(s["name"], tuple(float(v) for v in s["box"]),
                                    s.get("components", "xy")) for s in b.get("supports", [])]
            loads = [LoadSpec(l["name"], _pair(l["start"], f"{where}.loads.start"),
                              _pair(l["end"], f"{where}.loads.end"),
                              tuple(str(t) for t in l["traction"]),
                              tuple(l["inward"]) if "inward" in l else None)
                     for l in b.get("loads", [])]
            bodies.append(BodySpec(b.get("name", f"body{k}"), _shape(b["shape"], where, base),
                                   float(b.get("E", 1.0)), float(b.get("nu", 0.0)),
                                   bool(b.get("rigid", False)), float(b.get("inflate", 0.0)),
                                   supports, loads))
        phases = [_phase(p, k, bodies) for k, p in enumerate(data.get("phases", []))]
        contact = data.get("contact", {})
        solver = data.get("solver", {})
        pre = data.get("preconsolidate")
        scn = Scenario(
            name=data.get("name", Path(source).stem if source else "scenario"),
            description=data.get("description", ""),
            h=float(grid["h"]), domain=tuple(float(v) for v in grid["domain"]),
            bodies=bodies, phases=phases,
            mu=float(contact.get("mu", 0.0)), eps0=float(contact.get("eps0", 1.0)),
            shift=float(contact.get("shift", 1.5)),
            history_radius=float(contact.get("history_radius", 2.0)),
            tol_rel=float(solver.get("tol_rel", 1e-8)), max_iter=int(solver.get("max_iter", 50)),
            advect=solver.get("advect", "weno5"),
            slip_update=solver.get("slip_update", "step"),
            preconsolidate=None if pre is None else float(pre.get("inflate", 0.5)),
            output=dict(data.get("output", {})), monitor=dict(data.get("monitor", {})),
            source=None if source is None else str(source))
    except KeyError as exc:
        raise ScenarioError(f"missing required key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from None
    problems = validate(scn)
    if problems:
        raise ScenarioError("; ".join(problems))
    return scn


def validate(scn):
    """List of problems with a scenario (empty when it is runnable)."""
    out = []
    if not scn.h > 0:
        out.append(f"grid spacing must be positive (h={scn.h})")
    xmin, xmax, ymin, ymax = scn.domain
    if not (xmax > xmin and ymax > ymin):
        out.append(f"empty domain {scn.domain}")
    if not scn.bodies:
        out.append("no bodies")
    if not scn.phases or scn.total_steps < 1:
        out.append("step count must be at least 1")
    if scn.mu < 0:
        out.append("friction coefficient must be >= 0")
    if scn.slip_update not in ("iteration", "step"):
        out.append(f"unknown slip update {scn.slip_update!r}")
    if scn.advect not in ("weno5", "upwind"):
        out.append(f"unknown advection scheme {scn.advect!r}")
    margin = 3 * scn.h
    names = set()
    supports = set()
    for b in scn.bodies:
        if b.name in names:
            out.append(f"duplicate body name {b.name!r}")
        names.add(b.name)
        bx0, bx1, by0, by1 = b.shape.bounds()
        grow = max(b.inflate, scn.preconsolidate or 0.0) * scn.h
        if (bx0 - grow < xmin + margin or bx1 + grow > xmax - margin
                or by0 - grow < ymin + margin or by1 + grow > ymax - margin):
            out.append(f"body {b.name!r} is closer than 3h to the domain edge")
        if not b.rigid:
            if not b.E > 0 or not 0 <= b.nu < 0.5:
                out.append(f"body {b.name!r}: invalid material E={b.E}, nu={b.nu}")
        for s in b.supports:
            if s.name in supports:
                out.append(f"duplicate support name {s.name!r}")
            supports.add(s.name)
            if not set(s.components) <= {"x", "y"} or not s.components:
                out.append(f"support {s.name!r}: components must be x, y or xy")
    rigid = {b.name for b in scn.bodies if b.rigid}
    for p in scn.phases:
        if p.steps < 0:
            out.append(f"phase {p.name!r}: negative step count")
        for n in p.supports:
            if n not in supports:
                out.append(f"phase {p.name!r}: unknown support {n!r}")
        for n in p.motions:
            if n not in rigid:
                out.append(f"phase {p.name!r}: motion given for non-rigid or unknown body {n!r}")
    if all(b.rigid for b in scn.bodies):
        out.append("at least one deformable body is required")
    return out


def load_scenario(path):
    path = Path(path)
    if not path.exists():
        builtin = builtin_path(str(path))
        if builtin is None:
            raise ScenarioError(f"scenario file {path} not found")
        path = builtin
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}") from None
    return parse_scenario(data, source=path)


def _builtin_dir():
    return Path(str(resources.files("lscontact") / "scenarios"))


def list_scenarios():
    """(name, description) of the scenarios shipped with the package."""
    out = []
    for p in sorted(_builtin_dir().glob("*.toml")):
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
        out.append((p.stem, data.get("description", "")))
    return out


def builtin_path(name):
    p = _builtin_dir() / (name if name.endswith(".toml") else name + ".toml")
    return p if p.exists() else None


def output_dir(scn, cli_value=None):
    """Output directory: command line, then environment, then scenario file."""
    if cli_value:
        return Path(cli_value)
    env = os.environ.get("LSCONTACT_OUT")
    if env:
        return Path(env) / scn.name
    return Path(scn.output.get("dir", Path("out") / scn.name))
