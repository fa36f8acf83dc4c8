"""
Cylinder pressed onto a block
=============================

Runs the built-in ``hertz_vertical`` scenario (a cylinder cap pushed
straight down onto an elastic block) and compares the normal traction on
the contact surface with the plane-strain Hertz profile for the computed
contact force.  Takes about half a minute.
"""

import numpy as np

from lscontact.analytic import HertzSolution
from lscontact.runner import Simulation, contact_traction_profile
from lscontact.scenario import load_scenario

scn = load_scenario("hertz_vertical")
sim = Simulation(scn, write=False)
report = sim.step(scn.phases[0])
print(f"Newton iterations: {report.iterations}")
print("reaction on the top support:", np.round(report.reactions["top"], 2))

(pair,) = sim.pairs.values()
prof = contact_traction_profile(pair)
p = -prof["tau_n"]
force = float(np.sum(pair.weight[pair.active] * -pair.tau_n[pair.active]))
hertz = HertzSolution.plane_strain(force, 10.0, 1.0e4, 0.3)
s = prof["s"] - np.sum(prof["s"] * p) / np.sum(p)

print(f"contact force {force:.2f} N/mm, Hertz half width {hertz.a:.3f} mm, "
      f"peak {hertz.p_max:.1f} MPa")
print("   s [mm]   computed   Hertz")
for si, pi in zip(s, p):
    print(f"{si:+8.3f} {pi:9.2f} {float(hertz.pressure(si)):8.2f}")
