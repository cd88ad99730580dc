#!/usr/bin/env python
"""Half-plane bubbles: mass identities, the Pohozaev balance and the quadratic obstruction."""

import math

import numpy as np

from curvlab import liouville as lv

# %% masses against the closed forms
print("   c     d      V0        H0      d H0 - beta   c V0 - (2 pi - beta)")
for c, d in [(1, 1), (1, 0), (0.5, 0.5), (0.25, 1), (0, 1)]:
    rep = lv.halfplane_masses(lv.bubble_closed_form(1.0, c_inf=c, d_inf=d))
    beta = lv.beta_value(c, d)
    print(f"{c:5.2f} {d:5.2f} {rep.V0:9.5f} {rep.H0:9.5f} {d * rep.H0 - beta:12.1e} {c * rep.V0 - (2 * math.pi - beta):12.1e}")

full = lv.halfplane_masses(lv.bubble_closed_form(2.0, c_inf=1.0, d_inf=0.0))
print("full-plane mass / 4 pi:", 2 * full.V0 / (4 * math.pi))

# %% with F = 1 the exponent is d = 2 and the balance closes
rep = lv.pohozaev_residual(lv.bubble_closed_form(1.0, c_inf=1.0, d_inf=1.0))
print("d =", rep.d, " residual =", rep.residual)

# %% with F = 1 - |x|^2 the left side is negative while d(d-2) >= 0 would be needed
A = -np.eye(2)
for p in lv.fit_candidates(A):
    cert = lv.nonexistence_certificate(A, p)
    print(cert.verdict.value, f"pde residual {cert.pde_residual:.3f}  d {cert.d:.4f}  lhs {cert.pohozaev_lhs:.4f}")
