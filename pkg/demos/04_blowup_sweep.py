#!/usr/bin/env python
"""Halve (mu, lam) with mu = lam^2 and follow the saddle as it concentrates at p0."""

import math

from curvlab import EnergyModel, SweepSchedule, build_torus_with_hole, make_prescription, sweep
from curvlab.blowup import count_blowup_points

n = 64
mesh = build_torus_with_hole(n, 0.25)
model = EnergyModel.build(mesh, make_prescription(mesh, -math.pi / 2, 1.0, 1.0))
recs = sweep(model, SweepSchedule(0.2, 4), fit=True)

print(" k      lam   max u   mass   total curv   r/lam   fit (c, d)   rms")
for r in recs:
    if not r.converged:
        print(r.k, r.error)
        continue
    d = r.diagnostics
    print(f"{r.k:2d} {r.lam:8.5f} {d['max_u']:7.3f} {d['mass_total']:6.3f} {d['total_curvature']:12.3f}"
          f" {d['r_over_lambda']:7.3f}   ({r.fit.c_inf:.2f}, {r.fit.d_inf:.2f})  {r.fit.rms_residual:.3f}")
print("mass bound 2 pi * 1.2 =", 2 * math.pi * 1.2)
print("blow-up points:", count_blowup_points(recs, mesh=mesh))

# %% at fixed lam the spike width is one cell: r/lam halves with h
lam = recs[-1].lam
for m in (32, 64, 128):
    mesh = build_torus_with_hole(m, 0.25)
    rec = sweep(EnergyModel.build(mesh, make_prescription(mesh, -math.pi / 2, 1.0, 1.0)),
                SweepSchedule(lam, 0), fit=False)[0]
    print(f"n={m:4d}: r/lam = {rec.diagnostics['r_over_lambda']:.3f}")
