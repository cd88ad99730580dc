#!/usr/bin/env python
"""Build the holed torus, look at its discrete curvature and the lumped operators."""

import math

import numpy as np

from curvlab import assemble_operators, background_curvature, build_torus_with_hole

# %% a flat torus with a disk of radius 1/4 removed has chi = -1
for n in (16, 32, 64, 128):
    mesh = build_torus_with_hole(n, 0.25)
    ops = assemble_operators(mesh)
    bg = background_curvature(mesh, ops)
    seg = mesh.displacement(mesh.vertices[mesh.boundary_loop], np.roll(mesh.boundary_loop, -1))
    perim = np.hypot(*seg.T).sum()
    print(
        f"n={n:4d}  V={mesh.n_vertices:6d}  chi={mesh.euler_characteristic()}  "
        f"defect+2pi={bg.total_defect + 2 * math.pi:+.1e}  "
        f"area/(1-pi rho^2)={ops.mass.sum() / (1 - math.pi / 16):.5f}  perimeter/(2 pi rho)={perim / (math.pi / 2):.5f}"
    )

# %% all the curvature sits on the hole boundary: kappa ~ -1/rho there
mesh = build_torus_with_hole(64, 0.25)
bg = background_curvature(mesh)
bnd = mesh.is_boundary
print("interior |defect| max:", np.abs(bg.interior_defect).max())
print("mean kappa * rho on the boundary:", bg.kappa[bnd].mean() * 0.25)
