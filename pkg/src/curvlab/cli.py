"""Command-line entry point: ``curvlab {mesh,solve,mpass,sweep,liouville}``.

Every run reads an optional JSON configuration (see :mod:`curvlab.config`),
writes the resolved configuration to ``<out>/config.json`` and then the
artifacts of the chosen stage.  Exit codes:

    0  success
    2  invalid configuration or input
    3  a solver did not converge or a result failed its certificate
    4  internal error

On a nonzero exit a machine-readable ``failure.json`` is left in the output
directory next to whatever partial outputs were produced.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import blowup, liouville, mpass, solve
from .config import ConfigError, RunConfig, dumps, format_float, load_config
from .mesh import (
    MeshError,
    assemble_operators,
    background_curvature,
    build_torus_with_hole,
    triangle_quality,
    validate_mesh,
    write_mesh,
)
from .model import EnergyModel, make_prescription

logger = logging.getLogger("curvlab")

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_INTERNAL = 0, 2, 3, 4
MASS_BOUND = 2.0 * math.pi * 1.2


class StageFailure(RuntimeError):
    """A stage finished but its result did not pass the required checks."""

    def __init__(self, message, note=None):
        super().__init__(message)
        self.note = note


# --------------------------------------------------------------------------
# output helpers


def write_json(path: Path, obj) -> None:
    path.write_text(dumps(obj), encoding="utf-8")


def write_csv(path: Path, header, rows) -> None:
    def cell(v):
        if isinstance(v, (bool, np.bool_)):
            return str(bool(v)).lower()
        if isinstance(v, (float, np.floating)):
            return format_float(v) if math.isfinite(v) else "nan"
        if v is None:
            return ""
        return str(v)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([cell(v) for v in r])


def _point_summary(model, cp) -> dict:
    area, bnd, gb = model.curvature_integrals(cp.u)
    r_int, r_bnd = model.pde_residual(cp.u)
    return {
        "kind": cp.kind,
        "energy": cp.energy,
        "grad_norm": cp.grad_norm,
        "sigma_min": cp.min_eigenvalue,
        "negative_count": cp.negative_count,
        "iterations": cp.iterations,
        "gb_residual": gb,
        "area_curvature": area,
        "boundary_curvature": bnd,
        "pde_residual_interior": r_int,
        "pde_residual_boundary": r_bnd,
        "max_u": float(cp.u.max()),
        "min_u": float(cp.u.min()),
    }


def _build_model(cfg: RunConfig):
    mesh = build_torus_with_hole(cfg.mesh.n, cfg.mesh.rho, min_angle=cfg.mesh.min_angle)
    p = cfg.prescription
    data = make_prescription(mesh, p.p0_angle, p.amplitude_f, p.amplitude_h)
    return EnergyModel.build(mesh, data).with_params(cfg.params.mu, cfg.params.lam)


def _write_fields(path: Path, mesh, columns: dict) -> None:
    names = list(columns)
    rows = [
        [k, mesh.vertices[k, 0], mesh.vertices[k, 1]] + [float(columns[c][k]) for c in names]
        for k in range(mesh.n_vertices)
    ]
    write_csv(path, ["vertex", "x", "y"] + names, rows)


# --------------------------------------------------------------------------
# commands


def cmd_mesh(cfg: RunConfig, out: Path, workers: int) -> dict:
    mesh = build_torus_with_hole(cfg.mesh.n, cfg.mesh.rho, min_angle=cfg.mesh.min_angle)
    validate_mesh(mesh, min_angle=cfg.mesh.min_angle)
    ops = assemble_operators(mesh)
    bg = background_curvature(mesh, ops)
    write_mesh(out / "mesh.txt", mesh)
    _, angles = triangle_quality(mesh)
    seg = mesh.displacement(mesh.vertices[mesh.boundary_loop], np.roll(mesh.boundary_loop, -1))
    report = {
        "n": mesh.n,
        "rho": mesh.hole_radius,
        "n_vertices": mesh.n_vertices,
        "n_triangles": len(mesh.triangles),
        "n_boundary": len(mesh.boundary_loop),
        "euler_characteristic": mesh.euler_characteristic(),
        "defect_sum": bg.total_defect,
        "defect_target": -2.0 * math.pi,
        "defect_error": bg.total_defect + 2.0 * math.pi,
        "interior_defect_sum": float(bg.interior_defect.sum()),
        "boundary_defect_sum": float(bg.boundary_defect.sum()),
        "perimeter": float(np.hypot(seg[:, 0], seg[:, 1]).sum()),
        "area": float(ops.mass.sum()),
        "min_angle_deg": float(np.degrees(angles.min())),
        "negative_cotangent_weights": ops.negative_weights,
    }
    write_json(out / "mesh_report.json", report)
    return report


def _obstruction_note(model) -> str | None:
    bnd = model.mesh.is_boundary
    if np.all(model.data.f_mu > 0) and np.all(model.data.h_lam[bnd] > 0):
        return (
            "f_mu > 0 and h_lam > 0 everywhere, but the curvature integrals of any "
            "solution must add up to 2*pi*chi = -2*pi; no solution exists"
        )
    return None


def cmd_solve(cfg: RunConfig, out: Path, workers: int) -> dict:
    model = _build_model(cfg)
    mesh = model.mesh
    write_csv(
        out / "prescription.csv",
        ["vertex", "f", "h"],
        [[k, model.data.f[k], model.data.h[k]] for k in range(mesh.n_vertices)],
    )
    tol, it = cfg.solver.tol, cfg.solver.max_iter
    base = solve.newton(model.with_params(0.0, 0.0), np.zeros(model.size), tol=tol, max_iter=it)
    try:
        if model.mu == 0.0 and model.lam == 0.0:
            cp = base
        else:
            cp = solve.solve_minimizer_pair(model, base, tol=tol, steps=cfg.solver.ramp_steps)
    except solve.NoConvergence as exc:
        raise StageFailure(str(exc), note=_obstruction_note(model)) from exc
    if cp.kind != "minimizer":
        raise StageFailure(f"solution not certified (sigma_min = {cp.min_eigenvalue:.3e})")
    summary = {"status": "converged", "mu": model.mu, "lam": model.lam, **_point_summary(model, cp)}
    _write_fields(out / "solution.csv", mesh, {"u": cp.u})
    write_json(out / "solve.json", summary)
    return summary


def _mountain_pass_setup(cfg: RunConfig, model):
    tol = cfg.solver.tol
    u0 = solve.solve_base(model, tol=tol)
    mn = solve.solve_minimizer_pair(model, u0, tol=tol, steps=cfg.solver.ramp_steps)
    return u0, mn


def _far_endpoint(cfg, model, u0, e_min):
    mu = model.mu
    L = cfg.mpass.scale if cfg.mpass.scale is not None else blowup.default_scale(mu, model.mesh.hole_radius)
    w = mpass.build_test_function(model.mesh, mpass.TestFunctionSpec(mu=mu, L=L, center=model.data.p0))
    v, s, _ = mpass.find_far_endpoint(model, u0.u, w, e_min=e_min)
    return v, s, L


def cmd_mpass(cfg: RunConfig, out: Path, workers: int) -> dict:
    model = _build_model(cfg)
    if not (model.mu > 0 and model.lam > 0):
        raise ConfigError("mpass needs params.mu > 0 and params.lam > 0")
    u0, mn = _mountain_pass_setup(cfg, model)
    v, s, L = _far_endpoint(cfg, model, u0, mn.energy)
    mp = cfg.mpass
    res = mpass.mountain_pass(
        model, u0.u, v, P=mp.P, tol=cfg.solver.tol, tol_path=mp.tol_path, max_iter=mp.max_iter, minimizer=mn
    )
    sad = res.saddle
    summary = {
        "mu": model.mu,
        "lam": model.lam,
        "scale_L": L,
        "endpoint_s": s,
        "endpoint_energy": model.energy(v),
        "base": _point_summary(model.with_params(0.0, 0.0), u0),
        "minimizer": _point_summary(model, mn),
        "saddle": _point_summary(model, sad),
        "c_level": res.c_level,
        "level_gap": res.gap,
        "separation_mass_norm": model.mass_norm(sad.u - mn.u),
        "separation_h1_norm": model.h1_norm(sad.u - mn.u),
        "area_mass": res.area_mass,
        "boundary_mass": res.boundary_mass,
        "path_iterations": res.path_iterations,
        "path_max": res.path_max,
        "level_bound": 4.0 * math.pi * math.log(2.0 / model.mu),
    }
    _write_fields(out / "critical_points.csv", model.mesh, {"u_min": mn.u, "u_saddle": sad.u})
    write_csv(out / "path.csv", ["node", "energy"], list(enumerate(res.path.energies.tolist())))
    write_json(out / "mpass.json", summary)

    if mp.scan_mus and mp.scan_lams:
        mus, lams = sorted(mp.scan_mus), sorted(mp.scan_lams)
        mins = {}
        for a in mus:
            for b in lams:
                mins[(a, b)] = solve.solve_minimizer_pair(model.with_params(a, b), u0, tol=cfg.solver.tol)
        m0 = model.with_params(mus[0], lams[0])
        v0, _, _ = _far_endpoint(cfg, m0, u0, min(c.energy for c in mins.values()))
        tab = mpass.level_monotonicity_scan(
            model, mus, lams, u0.u, v0, P_values=tuple(mp.scan_P), tol=cfg.solver.tol,
            tol_path=mp.tol_path, workers=workers, minimizers=mins,
        )
        rows = []
        for i, a in enumerate(mus):
            for j, b in enumerate(lams):
                for p, P in enumerate(tab["P_values"]):
                    rows.append([a, b, P, tab["levels"][i, j, p], 4.0 * math.pi * math.log(2.0 / a)])
        write_csv(out / "level_scan.csv", ["mu", "lam", "P", "c_level", "level_bound"], rows)
        viol = mpass.check_monotone(tab)
        summary["scan"] = {
            "delta_path": tab["delta_path"],
            "monotone_violations": [list(v_) for v_ in viol],
            "bound_ok": bool(
                all(
                    tab["c"][i, j] <= 4.0 * math.pi * math.log(2.0 / a)
                    for i, a in enumerate(mus)
                    for j in range(len(lams))
                )
            ),
            "errors": {f"{k[0]},{k[1]},{k[2]}": e for k, e in tab["errors"].items()},
        }
        write_json(out / "mpass.json", summary)
        if tab["errors"]:
            raise StageFailure(f"{len(tab['errors'])} scan cells failed")
    return summary


SWEEP_COLUMNS = [
    "k", "mu", "lam", "converged", "method", "max_u", "area_mass", "boundary_mass", "mass_total",
    "mass_bound", "mass_ok", "total_curvature", "c_level", "min_energy", "separation",
    "negative_count", "r_n", "r_over_lambda", "peak_s", "peak_t",
    "fit_Lambda", "fit_s0", "fit_t0", "fit_c_inf", "fit_d_inf", "fit_rms", "error",
]


def cmd_sweep(cfg: RunConfig, out: Path, workers: int) -> dict:
    model = _build_model(cfg)
    sched = blowup.SweepSchedule(lam0=cfg.sweep.lam0, K=cfg.sweep.levels)
    recs = blowup.sweep(
        model, sched, P=cfg.mpass.P, tol=cfg.solver.tol, tol_path=cfg.mpass.tol_path,
        L=cfg.mpass.scale, fit=cfg.sweep.fit, workers=workers,
    )
    rows = []
    for r in recs:
        d = r.diagnostics
        f = r.fit
        fit = [f.Lambda, f.s0, f.t0, f.c_inf, f.d_inf, f.rms_residual] if f is not None else [None] * 6
        mt = d.get("mass_total")
        rows.append(
            [r.k, r.mu, r.lam, r.converged, d.get("method")]
            + [d.get(k) for k in ("max_u", "area_mass", "boundary_mass", "mass_total")]
            + [MASS_BOUND, None if mt is None else bool(mt <= MASS_BOUND)]
            + [d.get(k) for k in ("total_curvature", "c_level", "min_energy", "separation", "negative_count",
                                  "r_n", "r_over_lambda", "peak_s", "peak_t")]
            + fit
            + [r.error]
        )
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    ok = [r for r in recs if r.converged]
    count = blowup.count_blowup_points(recs, mesh=model.mesh)
    summary = {
        "levels": len(recs),
        "converged": len(ok),
        "mass_bound": MASS_BOUND,
        "mass_ok": bool(all(r.diagnostics["mass_total"] <= MASS_BOUND for r in ok)),
        "max_total_curvature": max((r.diagnostics["total_curvature"] for r in ok), default=math.nan),
        "r_over_lambda": [r.diagnostics["r_over_lambda"] for r in ok],
        "blowup_points": count,
        "errors": {str(r.k): r.error for r in recs if r.error},
    }
    write_json(out / "sweep.json", summary)
    if len(ok) < len(recs):
        raise StageFailure(f"{len(recs) - len(ok)} of {len(recs)} levels failed")
    return summary


def cmd_liouville(cfg: RunConfig, out: Path, workers: int) -> dict:
    lc = cfg.liouville
    A = np.asarray(lc.A, dtype=float)
    if not np.allclose(A, A.T) or not np.all(np.linalg.eigvalsh(A) < 0):
        raise ConfigError("liouville.A must be symmetric negative definite")
    rows = []
    worst = 0.0
    for c in lc.c_grid:
        for d in lc.d_grid:
            if c == 0.0 and d == 0.0:
                continue
            # the identities hold off the admissible box too, so c = 0, d < 1 is kept
            prof = liouville.bubble_closed_form(1.0, c_inf=c, d_inf=d, check_box=False)
            rep = liouville.pohozaev_residual(prof, tol=lc.tol)
            beta = liouville.beta_value(c, d)
            e1 = d * rep.H0 - beta
            e2 = c * rep.V0 - (2.0 * math.pi - beta)
            worst = max(worst, abs(e1), abs(e2))
            rows.append([c, d, rep.V0, rep.H0, beta, e1, e2, rep.d, rep.residual, rep.errors["V0"], rep.errors["H0"]])
    write_csv(
        out / "beta_table.csv",
        ["c_inf", "d_inf", "V0", "H0", "beta", "d_H0_minus_beta", "c_V0_minus_complement", "d", "pohozaev_residual",
         "err_V0", "err_H0"],
        rows,
    )
    full = liouville.halfplane_masses(liouville.bubble_closed_form(2.0, c_inf=1.0, d_inf=0.0), tol=lc.tol)

    cands = liouville.fit_candidates(A)
    certs = [liouville.nonexistence_certificate(A, p) for p in cands]
    write_csv(
        out / "certificates.csv",
        ["candidate", "verdict", "pde_residual", "d", "pohozaev_lhs", "identity_gap", "tail_converged"],
        [[k, c.verdict.value, c.pde_residual, c.d, c.pohozaev_lhs, c.identity_gap, c.converged]
         for k, c in enumerate(certs)],
    )

    # bubble-fit replay on a synthetic profile
    true = (1.0, 0.0, 0.0, 1.0, 1.0)
    fit = blowup.fit_bubble(blowup.synthetic_profile(true, noise=lc.fit_noise, seed=cfg.seed), workers=workers)
    fit_err = float(np.max(np.abs(np.subtract(fit.params, true))))

    summary = {
        "beta_identity_max_error": worst,
        "full_plane_mass": 2.0 * full.V0,
        "full_plane_mass_error": 2.0 * full.V0 - 4.0 * math.pi,
        "max_abs_d_minus_2": max(abs(r[7] - 2.0) for r in rows),
        "max_abs_pohozaev_residual": max(abs(r[8]) for r in rows),
        "A": A,
        "verdicts": [c.verdict.value for c in certs],
        "bubble_fit_error": fit_err,
        "bubble_fit_rms": fit.rms_residual,
    }
    write_json(out / "liouville.json", summary)
    return summary


HELP = {
    "mesh": "build the holed torus mesh and its Gauss-Bonnet report",
    "solve": "solve for the conformal factor at (mu, lam) and certify it",
    "mpass": "minimizer and mountain-pass saddle, optional level scan",
    "sweep": "halving sweep of (mu, lam) with blow-up diagnostics",
    "liouville": "half-plane bubble identities and the nonexistence test",
}

COMMANDS = {
    "mesh": cmd_mesh,
    "solve": cmd_solve,
    "mpass": cmd_mpass,
    "sweep": cmd_sweep,
    "liouville": cmd_liouville,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="curvlab", description="Prescribed-curvature experiments on a holed torus.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", type=Path, default=None, help="JSON run configuration")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides config)")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="parallel workers")
        p.add_argument("--seed", type=int, default=None, help="random seed (overrides config)")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _fail(out: Path | None, stage: str, code: int, exc: BaseException, note=None) -> int:
    record = {
        "stage": stage,
        "exit_code": code,
        "error": type(exc).__name__,
        "message": str(exc),
        "line": getattr(exc, "line", None),
        "note": note,
    }
    print(f"curvlab {stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
    if note:
        print(f"  note: {note}", file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "failure.json", record)
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    stage = args.command
    out = args.out
    try:
        cfg = load_config(args.config) if args.config is not None else RunConfig()
        if args.out is not None:
            cfg.out = str(args.out)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            cfg.seed = args.seed
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
    except (ConfigError, OSError) as exc:
        return _fail(out, stage, EXIT_VALIDATION, exc)
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "config.json", cfg.to_dict())
        COMMANDS[stage](cfg, out, args.workers)
    except (ConfigError, MeshError, mpass.ResolutionError, liouville.DomainError, liouville.PreconditionError) as exc:
        return _fail(out, stage, EXIT_VALIDATION, exc)
    except StageFailure as exc:
        return _fail(out, stage, EXIT_CONVERGENCE, exc, exc.note)
    except (
        solve.NoConvergence,
        solve.LinearSolveFailure,
        solve.EigenSolveFailure,
        mpass.ScanExhausted,
        mpass.Collapse,
        blowup.FitDiverged,
        liouville.NonConvergentTail,
    ) as exc:
        return _fail(out, stage, EXIT_CONVERGENCE, exc)
    except Exception as exc:  # anything else is a bug
        logger.debug("%s", traceback.format_exc())
        return _fail(out, stage, EXIT_INTERNAL, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
