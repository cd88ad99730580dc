#!/usr/bin/env python
"""A second solution above the minimizer, found by relaxing a path over the energy ridge."""

import math

import numpy as np

from curvlab import EnergyModel, build_torus_with_hole, make_prescription
from curvlab.blowup import default_scale
from curvlab.mpass import TestFunctionSpec, build_test_function, find_far_endpoint, mountain_pass
from curvlab.solve import solve_base, solve_minimizer_pair

mesh = build_torus_with_hole(32, 0.25)
model = EnergyModel.build(mesh, make_prescription(mesh, -math.pi / 2, 1.0, 1.0)).with_params(1e-2, 1e-1)
u0 = solve_base(model)
umin = solve_minimizer_pair(model, u0)

# %% a logarithmic spike at p0 drives the energy to -infinity
spike = build_test_function(mesh, TestFunctionSpec(mu=model.mu, L=default_scale(model.mu, 0.25), center=model.data.p0))
v, s, scan = find_far_endpoint(model, u0.u, spike, e_min=umin.energy)
for si, e in scan:
    print(f"I(u0 + {si:g} w) = {e:.4f}")

# %% relax the straight path and polish the top with Newton
res = mountain_pass(model, u0.u, v, P=33, minimizer=umin)
print(f"minimizer: I = {umin.energy:.4f}, sigma_min = {umin.min_eigenvalue:.4f}")
print(f"saddle:    I = {res.c_level:.4f}, sigma_min = {res.saddle.min_eigenvalue:.4f}, "
      f"negative directions = {res.saddle.negative_count}")
print("path energies:", np.array2string(res.path.energies, precision=2, max_line_width=100))
print("separation in L2:", model.mass_norm(res.saddle.u - umin.u))
print("mu/2 int e^2u =", res.area_mass, " lam int e^u =", res.boundary_mass)
