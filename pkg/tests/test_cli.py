import json
import math

import pytest

from curvlab.cli import main


def run(tmp_path, cmd, cfg=None, name="out", extra=()):
    out = tmp_path / name
    argv = [cmd, "--out", str(out), "--workers", "1"] + list(extra)
    if cfg is not None:
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(cfg, indent=1))
        argv += ["--config", str(p)]
    return main(argv), out


def test_mesh_default(tmp_path):
    code, out = run(tmp_path, "mesh")
    assert code == 0
    rep = json.loads((out / "mesh_report.json").read_text())
    assert rep["euler_characteristic"] == -1
    assert abs(rep["defect_sum"] + 2 * math.pi) < 1e-9
    assert (out / "mesh.txt").exists()
    resolved = json.loads((out / "config.json").read_text())
    assert resolved["mesh"]["n"] == 32


def test_mesh_bad_radius(tmp_path):
    code, out = run(tmp_path, "mesh", {"mesh": {"rho": 0.6}})
    assert code == 2
    fail = json.loads((out / "failure.json").read_text())
    assert fail["exit_code"] == 2 and fail["line"] is not None


def test_unknown_config_key(tmp_path, capsys):
    code, _ = run(tmp_path, "solve", {"solver": {"tolerance": 1e-8}})
    assert code == 2
    assert "tolerance" in capsys.readouterr().err


def test_solve_certified_and_deterministic(tmp_path):
    cfg = {"mesh": {"n": 16}, "params": {"mu": 0.0, "lam": 0.0}}
    code, out = run(tmp_path, "solve", cfg, name="a", extra=["--seed", "3"])
    assert code == 0
    res = json.loads((out / "solve.json").read_text())
    assert res["kind"] == "minimizer" and res["sigma_min"] > 0
    code2, out2 = run(tmp_path, "solve", cfg, name="b", extra=["--seed", "3"])
    assert code2 == 0
    assert (out / "solve.json").read_bytes() == (out2 / "solve.json").read_bytes()
    assert (out / "solution.csv").read_bytes() == (out2 / "solution.csv").read_bytes()


def test_solve_obstruction(tmp_path):
    code, out = run(tmp_path, "solve", {"mesh": {"n": 16}, "params": {"mu": 10.0, "lam": 10.0}})
    assert code == 3
    fail = json.loads((out / "failure.json").read_text())
    assert "2*pi*chi" in fail["note"]
    assert (out / "prescription.csv").exists()


def test_mpass_two_critical_points(tmp_path):
    code, out = run(tmp_path, "mpass", {"mesh": {"n": 32}})
    assert code == 0
    res = json.loads((out / "mpass.json").read_text())
    assert res["minimizer"]["sigma_min"] > 0
    assert res["saddle"]["negative_count"] >= 1
    assert res["separation_mass_norm"] >= 1e-2
    assert res["c_level"] > res["minimizer"]["energy"]
    assert (out / "critical_points.csv").exists() and (out / "path.csv").exists()


def test_mpass_needs_positive_parameters(tmp_path):
    code, _ = run(tmp_path, "mpass", {"mesh": {"n": 16}, "params": {"mu": 0.0, "lam": 0.1}})
    assert code == 2


def test_sweep_csv(tmp_path):
    code, out = run(tmp_path, "sweep", {"mesh": {"n": 32}, "sweep": {"levels": 1, "fit": False}})
    assert code == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    head = lines[0].split(",")
    assert len(lines) == 3
    col = head.index("mass_ok")
    assert all(r.split(",")[col] == "true" for r in lines[1:])


def test_liouville_tables(tmp_path):
    code, out = run(tmp_path, "liouville")
    assert code == 0
    res = json.loads((out / "liouville.json").read_text())
    assert res["beta_identity_max_error"] <= 1e-4
    assert abs(res["full_plane_mass_error"]) <= 1e-4
    assert set(res["verdicts"]) == {"inconsistent"}
    assert len((out / "beta_table.csv").read_text().splitlines()) == 25


def test_liouville_rejects_indefinite_matrix(tmp_path):
    code, _ = run(tmp_path, "liouville", {"liouville": {"A": [[-1, 0], [0, 0.5]]}})
    assert code == 2
