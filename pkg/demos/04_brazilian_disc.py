"""
Compressing a disc between rigid platens
========================================

The ``brazilian_disc`` scenario squeezes an elastic disc between two
rigid plates.  The contact half width should grow with the square root
of the force.  The measured width follows the classical rigid-flat
Hertz value to within the grid spacing, and the scaled formula has the
same square-root shape with a smaller prefactor.  The first 15 of the 50 load steps are run here, which
takes under a minute; ``lscontact run brazilian_disc`` runs them all and
writes VTK, CSV and JSON-lines output.
"""

import numpy as np

from lscontact.analytic import hertz_half_width, plane_strain_half_width
from lscontact.scenario import load_scenario
from lscontact.runner import Simulation

scn = load_scenario("brazilian_disc").truncated(15)
sim = Simulation(scn, write=False)
top = scn.body_index("top_platen")

widths, forces = [], []
print("step  force [N/mm]  half width  rigid-flat Hertz  scaled formula   [mm]")
for phase in scn.phases:
    for _ in range(phase.steps):
        sim.step(phase)
        (pair,) = [p for p in sim.pairs.values() if top in (p.i, p.j)]
        a = pair.active
        x = pair.x[a]
        axis = np.linalg.svd(x - x.mean(axis=0), full_matrices=False)[2][0]
        t = x @ axis
        widths.append(0.5 * (t.max() - t.min()))
        forces.append(float(np.sum(pair.weight[a] * -pair.tau_n[a])))
        print(f"{sim.step_index:4d} {forces[-1]:12.2f} {widths[-1]:11.3f} "
              f"{plane_strain_half_width(forces[-1], 10.0, 1.0e5, 0.3, identical=False):16.3f} "
              f"{hertz_half_width(forces[-1], 10.0, 1.0e5, 0.3):15.3f}")

slope = np.polyfit(np.log(forces), np.log(widths), 1)[0]
print(f"log-log slope of half width against force: {slope:.3f} (square-root law: 0.5)")

# the active set grows by whole contour segments, so the width moves in
# steps of about h while the force grows smoothly
