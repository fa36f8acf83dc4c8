"""Closed-form references: Hertz line contact and the inclined-plane test."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import quad


def hertz_half_width(F, R, E, nu):
    """Half-width from ``(2a)**2 = F (1 - nu**2) R / (pi E)``.

    This is the form used for the a-F comparison of the disc compression
    test; `F` is a force per unit thickness.
    """
    if F < 0 or R <= 0 or E <= 0:
        raise ValueError(f"need F >= 0 and R, E > 0 (got F={F}, R={R}, E={E})")
    return 0.5 * np.sqrt(F * (1 - nu ** 2) * R / (np.pi * E))


def plane_strain_half_width(F, R, E, nu, identical=True):
    """Classical plane-strain Hertz half-width for a cylinder on a flat.

    With ``identical=True`` both bodies share E and nu; otherwise the flat
    is rigid.
    """
    if F < 0 or R <= 0 or E <= 0:
        raise ValueError(f"need F >= 0 and R, E > 0 (got F={F}, R={R}, E={E})")
    e_star = E / (1 - nu ** 2) / (2.0 if identical else 1.0)
    return np.sqrt(4 * F * R / (np.pi * e_star))


@dataclass(frozen=True)
class HertzSolution:
    F: float
    R: float
    E: float
    nu: float
    a: float

    @classmethod
    def plane_strain(cls, F, R, E, nu, identical=True):
        return cls(F, R, E, nu, plane_strain_half_width(F, R, E, nu, identical))

    @property
    def p_max(self):
        return 2 * self.F / (np.pi * self.a) if self.a > 0 else 0.0

    def pressure(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) < self.a
        return np.where(inside, self.p_max * np.sqrt(np.clip(1 - (x / self.a) ** 2, 0, None)), 0.0)

    def total_force(self):
        return quad(lambda s: float(self.pressure(s)), -self.a, self.a, limit=200)[0]


class ContactState(Enum):
    STICK = "stick"
    SLIP = "slip"


def incline_state(mu, slope):
    """Slip exactly when the friction coefficient is below the slope."""
    if slope < 0:
        raise ValueError(f"slope must be non-negative, got {slope}")
    return ContactState.SLIP if mu < slope else ContactState.STICK
