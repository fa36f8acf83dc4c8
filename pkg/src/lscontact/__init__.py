"""Frictional multi-body contact with level-set boundaries on a Cartesian grid.

Bodies are described by signed-distance level sets on one background
grid, contact is enforced with penalty tractions on an unbiased
intermediate surface, and stresses are carried between load steps by
material points.
"""

from .analytic import HertzSolution, hertz_half_width, incline_state
from .contact import ContactPair, FrictionLaw, return_map
from .grid import Grid
from .levelset import Circle, Polygon, Rectangle, init_primitive, reinitialize
from .mechanics import Material
from .runner import Simulation, contact_traction_profile, reaction_force, run
from .scenario import list_scenarios, load_scenario

__all__ = [
    "Circle", "ContactPair", "FrictionLaw", "Grid", "HertzSolution", "Material", "Polygon",
    "Rectangle", "Simulation", "contact_traction_profile", "hertz_half_width", "incline_state",
    "init_primitive", "list_scenarios", "load_scenario", "reaction_force", "reinitialize",
    "return_map", "run",
]
