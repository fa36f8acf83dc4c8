"""Command line: ``lscontact run | list-scenarios | validate``."""

from __future__ import annotations

import argparse
import logging
import sys

from .runner import StepError, Simulation
from .scenario import ScenarioError, list_scenarios, load_scenario, output_dir, validate

log = logging.getLogger("lscontact")


def _load(path, args=None):
    scn = load_scenario(path)
    if args is not None:
        if args.grid_h is not None:
            scn.h = args.grid_h
        if args.steps is not None:
            if args.steps < 1:
                raise ScenarioError("--steps must be at least 1")
            scn = scn.truncated(args.steps)
        if args.advect is not None:
            scn.advect = args.advect
        problems = validate(scn)
        if problems:
            raise ScenarioError("; ".join(problems))
    return scn


def cmd_run(args):
    scn = _load(args.scenario, args)
    out = output_dir(scn, args.out)
    log.info("running %s: %d steps, h = %g, output in %s", scn.name, scn.total_steps, scn.h, out)
    sim = Simulation(scn, out=out)
    try:
        reports = sim.run()
    except StepError as exc:
        log.error("%s", exc)
        return 3
    last = reports[-1]
    for name, f in sorted(last.reactions.items()):
        print(f"{name}: reaction ({f[0]:.6g}, {f[1]:.6g})")
    print(f"{len(reports)} steps written to {out}")
    return 0


def cmd_list(args):
    for name, desc in list_scenarios():
        print(f"{name:26s} {desc}")
    return 0


def cmd_validate(args):
    scn = _load(args.scenario)
    print(f"{scn.name}: ok ({len(scn.bodies)} bodies, {scn.total_steps} steps, h = {scn.h:g})")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="lscontact",
                                description="Level-set frictional contact with material points")
    p.add_argument("--log-level", default="INFO",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file or built-in scenario name")
    r.add_argument("scenario")
    r.add_argument("--out", help="output directory")
    r.add_argument("--steps", type=int, help="run only the first N load steps")
    r.add_argument("--grid-h", type=float, help="override the grid spacing")
    r.add_argument("--advect", choices=["weno5", "upwind"], help="level-set advection scheme")
    r.add_argument("--log-level", dest="sub_log_level", type=str.upper,
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    r.set_defaults(func=cmd_run)

    ls = sub.add_parser("list-scenarios", help="list the built-in scenarios")
    ls.set_defaults(func=cmd_list)

    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = getattr(args, "sub_log_level", None) or args.log_level
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
