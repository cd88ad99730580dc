import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvlab.mesh import (
    MeshError,
    assemble_operators,
    background_curvature,
    build_torus_with_hole,
    read_mesh,
    triangle_quality,
    write_mesh,
)


def p1_dirichlet(mesh, u):
    """Independent Dirichlet energy: constant gradient per triangle."""
    X = mesh.triangle_coords()
    e1 = X[:, 1] - X[:, 0]
    e2 = X[:, 2] - X[:, 0]
    J = np.stack([e1, e2], axis=2)  # columns are edge vectors
    du = np.stack([u[mesh.triangles[:, 1]] - u[mesh.triangles[:, 0]], u[mesh.triangles[:, 2]] - u[mesh.triangles[:, 0]]], axis=1)
    grad = np.linalg.solve(np.transpose(J, (0, 2, 1)), du[..., None])[..., 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return 0.5 * np.sum(area * np.sum(grad**2, axis=1))


@pytest.mark.parametrize("n", [16, 32, 64])
def test_gauss_bonnet_defect(n):
    mesh = build_torus_with_hole(n, 0.25)
    bg = background_curvature(mesh)
    assert mesh.euler_characteristic() == -1
    assert abs(bg.total_defect + 2 * math.pi) < 1e-9


def test_interior_defect_vanishes_away_from_hole(mesh32):
    bg = background_curvature(mesh32)
    d = mesh32.displacement(mesh32.hole_center)
    far = np.hypot(d[:, 0], d[:, 1]) > mesh32.hole_radius + 2 * mesh32.spacing
    assert np.abs(bg.interior_defect[far]).max() < 1e-12


def test_boundary_is_inscribed_polygon(mesh32):
    d = mesh32.displacement(mesh32.hole_center, mesh32.boundary_loop)
    assert np.allclose(np.hypot(d[:, 0], d[:, 1]), mesh32.hole_radius, atol=1e-12)
    ang = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
    # the loop winds once around the hole
    assert abs(abs(ang[-1] - ang[0]) - 2 * math.pi) < 2 * math.pi / len(ang) + 1e-12


@pytest.mark.parametrize("n", [32, 64])
def test_area_and_perimeter_converge(n):
    mesh = build_torus_with_hole(n, 0.25)
    ops = assemble_operators(mesh)
    rho = 0.25
    assert abs(ops.mass.sum() / (1 - math.pi * rho**2) - 1) < 4.0 / n**2 * 10
    assert abs(ops.boundary_mass.sum() / (2 * math.pi * rho) - 1) < 0.01


def test_triangles_positively_oriented(mesh32):
    areas, angles = triangle_quality(mesh32)
    assert areas.min() > 0
    assert math.degrees(angles.min()) >= 20.0


@settings(max_examples=15, deadline=None)
@given(n=st.sampled_from([16, 24, 32, 48]), rho=st.floats(0.12, 0.42))
def test_mesh_invariants_over_parameters(n, rho):
    mesh = build_torus_with_hole(n, rho)
    bg = background_curvature(mesh)
    assert mesh.euler_characteristic() == -1
    assert abs(bg.total_defect + 2 * math.pi) < 1e-9
    assert len(mesh.boundary_loop) >= 8


def test_stiffness_matches_independent_energy(mesh16, rng):
    ops = assemble_operators(mesh16)
    S = ops.stiffness
    assert abs(S - S.T).max() < 1e-13
    assert np.abs(S @ np.ones(mesh16.n_vertices)).max() < 1e-12
    for _ in range(5):
        u = rng.standard_normal(mesh16.n_vertices)
        assert 0.5 * u @ (S @ u) == pytest.approx(p1_dirichlet(mesh16, u), rel=1e-12)


def test_stiffness_positive_semidefinite(mesh16):
    S = assemble_operators(mesh16).stiffness.toarray()
    w = np.linalg.eigvalsh(S)
    assert w[0] > -1e-10
    # one-dimensional kernel (constants)
    assert w[1] > 1e-6


def test_boundary_normals_point_into_the_hole(mesh32):
    ops = assemble_operators(mesh32)
    d = mesh32.displacement(mesh32.hole_center, mesh32.boundary_loop)
    assert np.all(np.sum(ops.boundary_normals * d, axis=1) < 0)


def test_round_trip(tmp_path, mesh32):
    p = tmp_path / "m.txt"
    write_mesh(p, mesh32)
    back = read_mesh(p)
    assert np.array_equal(back.vertices, mesh32.vertices)
    assert np.array_equal(back.triangles, mesh32.triangles)
    assert np.array_equal(back.boundary_loop, mesh32.boundary_loop)
    assert back.n == mesh32.n and back.hole_radius == mesh32.hole_radius
    write_mesh(tmp_path / "m2.txt", back)
    assert (tmp_path / "m2.txt").read_bytes() == p.read_bytes()


@pytest.mark.parametrize("n,rho", [(16, 0.6), (16, 0.0), (8, 0.25), (16, 0.01)])
def test_invalid_parameters(n, rho):
    with pytest.raises(MeshError):
        build_torus_with_hole(n, rho)


def test_bad_header(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("sphere 3 0.1\n")
    with pytest.raises(MeshError):
        read_mesh(p)
