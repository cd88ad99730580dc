#!/usr/bin/env python
"""Nonpositive curvature gives a unique solution; small positive shifts keep a minimizer."""

import math

import numpy as np

from curvlab import EnergyModel, build_torus_with_hole, constant_prescription, make_prescription, newton
from curvlab.solve import solve_base, solve_minimizer_pair

mesh = build_torus_with_hole(32, 0.25)

# %% constant negative targets: every Newton start lands on the same field
m = EnergyModel.build(mesh, constant_prescription(mesh, -1.0, -1.0))
rng = np.random.default_rng(0)
sols = [newton(m, rng.normal(0, 1, m.size)) for _ in range(5)]
print("spread over starts:", max(np.abs(s.u - sols[0].u).max() for s in sols))
print("sigma_min:", sols[0].min_eigenvalue, " GB residual:", sols[0].gb_residual)

# %% the well prescription, switched off and then slightly positive at p0
model = EnergyModel.build(mesh, make_prescription(mesh, -math.pi / 2, 1.0, 1.0))
u0 = solve_base(model)
print(f"base: I = {u0.energy:.6f}, sigma_min = {u0.min_eigenvalue:.4f}")
for mu, lam in [(1e-3, 1e-2), (1e-2, 1e-1), (4e-2, 2e-1)]:
    cp = solve_minimizer_pair(model.with_params(mu, lam), u0)
    print(f"mu={mu:g} lam={lam:g}: I = {cp.energy:.6f}, sigma_min = {cp.min_eigenvalue:.4f}, "
          f"|u - u0|_inf = {np.abs(cp.u - u0.u).max():.4f}")

# %% positive targets everywhere cannot integrate to 2 pi chi = -2 pi
try:
    solve_minimizer_pair(model.with_params(10.0, 10.0), u0)
except Exception as exc:
    print("mu = lam = 10:", type(exc).__name__, exc)
