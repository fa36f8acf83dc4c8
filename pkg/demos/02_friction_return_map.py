"""
Coulomb friction as a return map
================================

Contact tractions come from penalty springs on the normal and tangential
gaps.  When the tangential trial traction leaves the Coulomb cone the
excess becomes plastic slip.  Here one contact point is held closed and
sheared back and forth.
"""

import numpy as np

from lscontact.contact import FrictionLaw, return_map

law = FrictionLaw(mu=0.3, eps_n=1e-3, eps_t=1e-3)
g_n = -2e-3                      # closed gap: tau_n = -2
path = np.concatenate([np.linspace(0, 2e-3, 6), np.linspace(2e-3, -2e-3, 11)[1:]])

g_p = 0.0
print(" g_t        tau_t    |tau_t|/|tau_n|  slip g_t^p")
for g_t in path:
    tau_n, tau_t, g_p, slipping = return_map(g_n, g_t, g_p, law)
    print(f"{g_t:+.1e}  {tau_t:+.3f}   {abs(tau_t) / abs(tau_n):.3f}            "
          f"{'yes ' if slipping else 'no  '} {g_p:+.2e}")

# on reversal the point sticks again until the cone is reached on the other side
