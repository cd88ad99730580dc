import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvlab.blowup import default_scale
from curvlab.mesh import assemble_operators, build_torus_with_hole
from curvlab.mpass import TestFunctionSpec as SpikeSpec
from curvlab.mpass import (
    ResolutionError,
    build_test_function,
    check_monotone,
    cutoff,
    find_far_endpoint,
    log_spike,
    mountain_pass,
)
from curvlab.solve import solve_base, solve_minimizer_pair


@pytest.fixture(scope="module")
def cell(model32):
    """Base solution, minimizer and far endpoint at (mu, lam) = (1e-2, 1e-1)."""
    m = model32.with_params(1e-2, 1e-1)
    u0 = solve_base(m)
    mn = solve_minimizer_pair(m, u0)
    w = build_test_function(m.mesh, SpikeSpec(mu=1e-2, L=default_scale(1e-2, 0.25), center=m.data.p0))
    v, s, _ = find_far_endpoint(m, u0.u, w, e_min=mn.energy)
    return m, u0, mn, v


def test_log_spike_values():
    mu = 1e-2
    r = np.array([0.0, mu / 2, mu, 0.1, 1.0, 2.0])
    z = log_spike(r, mu)
    assert np.allclose(z, [-math.log(mu), -math.log(mu), -math.log(mu), -math.log(0.1), 0.0, 0.0])


def test_spike_support_and_plateau(mesh32):
    spec = SpikeSpec(mu=1e-2, L=default_scale(1e-2, 0.25), center=int(mesh32.boundary_loop[0]))
    w = build_test_function(mesh32, spec)
    d = mesh32.displacement(mesh32.vertices[spec.center])
    r = np.hypot(d[:, 0], d[:, 1])
    assert np.all(w[r >= spec.support_radius] == 0)
    assert w[spec.center] == pytest.approx(-math.log(1e-2))
    assert spec.support_radius < 0.5 * mesh32.hole_radius


def test_dirichlet_energy_approaches_half_disk_value():
    from curvlab.model import make_prescription

    ratios = []
    for n in (32, 64):
        mesh = build_torus_with_hole(n, 0.25)
        ops = assemble_operators(mesh)
        p0 = make_prescription(mesh, -math.pi / 2, 1, 1).p0
        w = build_test_function(mesh, SpikeSpec(mu=1e-2, L=default_scale(1e-2, 0.25), center=p0))
        ratios.append(w @ (ops.stiffness @ w) / (-math.pi * math.log(1e-2)))
    # nodal sampling overshoots the continuum value and the excess shrinks with h
    assert ratios[0] > ratios[1] > 1.0
    assert ratios[1] - 1 < 0.6 * (ratios[0] - 1)


def test_resolution_errors(mesh32):
    with pytest.raises(ResolutionError):
        build_test_function(mesh32, SpikeSpec(mu=1e-2, L=0.5, center=0))
    with pytest.raises(ResolutionError):
        build_test_function(mesh32, SpikeSpec(mu=1e-4, L=1.0, center=0))
    with pytest.raises(ValueError):
        build_test_function(mesh32, SpikeSpec(mu=0.0, L=1.0, center=0))


@settings(max_examples=50, deadline=None)
@given(top=st.floats(-10, 10), width=st.floats(1e-3, 5), x=st.floats(-30, 30))
def test_cutoff_range(top, width, x):
    c = float(cutoff(np.array([x]), top, width, 0.0)[0])
    assert 0.0 <= c <= 1.0
    if x <= top - width:
        assert c == 0.0
    if x >= top:
        assert c == 1.0


def test_far_endpoint_below_minimum(cell):
    m, u0, mn, v = cell
    assert m.energy(v) < mn.energy - 1.0


def test_two_distinct_critical_points(cell):
    m, u0, mn, v = cell
    res = mountain_pass(m, u0.u, v, P=33, minimizer=mn)
    sad = res.saddle
    assert mn.min_eigenvalue > 0
    assert sad.negative_count >= 1 and sad.grad_norm < 1e-10
    assert m.mass_norm(sad.u - mn.u) >= 1e-2
    assert res.c_level > mn.energy
    assert res.c_level <= 4 * math.pi * math.log(2 / m.mu)
    assert abs(sad.gb_residual) < 1e-6


def test_mountain_pass_rejects_bad_input(cell):
    m, u0, mn, v = cell
    with pytest.raises(ValueError):
        mountain_pass(m, u0.u, v, P=8)
    with pytest.raises(ValueError):
        mountain_pass(m, u0.u, u0.u, P=33)


def test_check_monotone_flags_increase():
    c = np.array([[3.0, 2.0], [2.5, 1.9]])
    tab = {"c": c, "delta_path": 0.0}
    assert check_monotone(tab) == []
    c2 = c.copy()
    c2[1, 0] = 1.5
    bad = check_monotone({"c": c2, "delta_path": 0.0})
    assert [b[0] for b in bad] == ["lam"]
    assert check_monotone({"c": c2, "delta_path": 0.5}) == []
