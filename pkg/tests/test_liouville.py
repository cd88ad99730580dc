import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvlab.liouville import (
    DomainError,
    PreconditionError,
    Verdict,
    beta_value,
    bubble_closed_form,
    bubble_masses_exact,
    damped_bubble,
    extrapolate,
    fit_candidates,
    halfplane_masses,
    nonexistence_certificate,
    pde_residual_norm,
    pohozaev_residual,
)

GRID = [0.0, 0.25, 0.5, 0.75, 1.0]


@settings(max_examples=30, deadline=None)
@given(
    L=st.floats(0.2, 5.0),
    s0=st.floats(-2, 2),
    t0=st.floats(0, 2),
    c=st.floats(0.0, 1.0),
    d=st.floats(0.0, 1.0),
)
def test_closed_form_solves_system(L, s0, t0, c, d):
    if c + d * d < 1e-3:
        return
    p = bubble_closed_form(L, s0, t0, c, d, check_box=False)
    rng = np.random.default_rng(0)
    s = s0 + L * rng.uniform(-20, 20, 1000)
    t = t0 + L * rng.uniform(0, 20, 1000)
    scale = np.exp(2 * p.w(s, t))
    assert np.max(np.abs(p.interior_residual(s, t)) / np.maximum(1.0, scale)) < 1e-10
    sb = s0 + L * np.linspace(-20, 20, 201)
    assert np.max(np.abs(p.boundary_residual(sb))) < 1e-10


def test_full_plane_mass():
    rep = halfplane_masses(bubble_closed_form(2.0, c_inf=1.0, d_inf=0.0))
    assert abs(2 * rep.V0 - 4 * math.pi) < 1e-4


@pytest.mark.parametrize("c", GRID)
@pytest.mark.parametrize("d", GRID)
def test_beta_identities(c, d):
    if c == 0 and d == 0:
        with pytest.raises(DomainError):
            bubble_closed_form(1.0, c_inf=c, d_inf=d, check_box=False)
        return
    rep = halfplane_masses(bubble_closed_form(1.0, c_inf=c, d_inf=d, check_box=False))
    beta = beta_value(c, d)
    assert abs(d * rep.H0 - beta) < 1e-4
    assert abs(c * rep.V0 - (2 * math.pi - beta)) < 1e-4
    V0, H0 = bubble_masses_exact(c, d)
    assert rep.H0 == pytest.approx(H0, rel=1e-6)
    assert rep.V0 == pytest.approx(V0, rel=1e-6)


@pytest.mark.parametrize("c,d", [(1.0, 1.0), (1.0, 0.0), (0.5, 0.75), (0.0, 1.0)])
def test_pohozaev_balance_without_quadratic_part(c, d):
    rep = pohozaev_residual(bubble_closed_form(1.3, 0.2, 0.0, c, d))
    assert abs(rep.d - 2) < 1e-4
    assert abs(rep.residual) < 1e-5


@pytest.mark.parametrize("L,c,d", [(1.0, 1.0, 1.0), (0.5, 0.3, 0.6), (2.0, 1.0, 0.2)])
def test_pohozaev_lhs_negative_for_negative_definite(L, c, d):
    p = bubble_closed_form(L, c_inf=c, d_inf=d).with_F(-np.eye(2))
    rep = pohozaev_residual(p, strict=False)
    assert rep.pohozaev_lhs < 0


def test_box_constraints():
    with pytest.raises(DomainError):
        bubble_closed_form(-1.0)
    with pytest.raises(DomainError):
        bubble_closed_form(1.0, c_inf=0.0, d_inf=0.5)
    with pytest.raises(DomainError):
        bubble_closed_form(1.0, t0=-0.1)


def test_extrapolation_exact_for_model_tail():
    R = np.array([100.0, 200.0, 400.0])
    f = lambda r: 3.0 + 2.0 / r - 5.0 / r**2  # noqa: E731
    lim, spread = extrapolate(R, f(R), inner_value=f(50.0))
    assert lim == pytest.approx(3.0, abs=1e-12)
    assert spread < 1e-10


def test_certificate_rejects_wrong_equation():
    cert = nonexistence_certificate(-np.eye(2), bubble_closed_form(1.0, c_inf=1.0, d_inf=1.0))
    assert cert.verdict is Verdict.INAPPLICABLE
    assert cert.pde_residual > 0.5


def test_certificate_precondition():
    p = bubble_closed_form(1.0, c_inf=1.0, d_inf=1.0)
    with pytest.raises(PreconditionError):
        nonexistence_certificate(np.diag([-1.0, 0.5]), p)
    with pytest.raises(PreconditionError):
        nonexistence_certificate(np.array([[-1.0, 0.3], [0.0, -1.0]]), p)


def test_fitted_candidates_are_inconsistent():
    A = -np.eye(2)
    cands = fit_candidates(A)
    assert len(cands) >= 3
    for p in cands:
        cert = nonexistence_certificate(A, p)
        assert cert.pde_residual < cert.pde_tol
        assert cert.verdict is Verdict.INCONSISTENT
        assert cert.d >= 2 - cert.eps_d and cert.pohozaev_lhs < -cert.eps_p


def test_damped_bubble_residual_scales_with_damping():
    A = -np.eye(2)
    r1 = pde_residual_norm(damped_bubble(0.02, 0.02, 3.0).with_F(A, c=1.0, g=1.0))
    r2 = pde_residual_norm(damped_bubble(0.02, 0.04, 3.0).with_F(A, c=1.0, g=1.0))
    assert r1 < r2
