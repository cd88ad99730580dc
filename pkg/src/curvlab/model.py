"""Curvature prescriptions and the discrete energy of the conformal factor.

For a conformal factor ``u`` on the flat model surface the discrete energy is

    I(u) = 1/2 u.S u + <K, u>_m - 1/2 <f_mu, e^{2u}>_m
           + <kappa, u>_b - <h_lam, e^{u}>_b

where ``S`` is the cotangent stiffness, ``<., .>_m`` and ``<., .>_b`` are the
lumped area and boundary pairings, ``K`` and ``kappa`` the background
curvatures, and ``f_mu = f + mu``, ``h_lam = h + lam`` the prescribed ones.
Critical points are discrete solutions of

    -Lap u + K = f_mu e^{2u}        in M,
    du/dnu + kappa = h_lam e^{u}    on the boundary.

The nonlinear terms use nodal quadrature, so the identities relating energies
at different parameters hold exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse

from .mesh import BackgroundCurvature, Mesh, Operators, assemble_operators, background_curvature

#: largest admissible value of ``2 u`` before the exponentials are refused
EXP_LIMIT = 700.0


class Divergence(FloatingPointError):
    """The field is so large that ``e^{2u}`` would overflow.

    Callers read this as "energy heading to minus infinity".
    """

    def __init__(self, max_u: float):
        super().__init__(f"max(2u) = {2 * max_u:.6g} exceeds {EXP_LIMIT}")
        self.max_u = max_u


@dataclass(frozen=True, eq=False)
class CurvatureData:
    """Prescribed curvatures and perturbation parameters.

    Attributes
    ----------
    f : (V,) ndarray
        Gaussian curvature target at every vertex.
    h : (V,) ndarray
        Geodesic curvature target; only boundary entries are used.
    mu, lam : float
        Constant shifts, ``f_mu = f + mu`` and ``h_lam = h + lam``.
    p0 : int or None
        Boundary vertex where both ``f`` and ``h`` reach their maximum 0.
    amplitude_f, amplitude_h : float
        Well depths of the sin^2 family, or nan for custom data.
    """

    f: np.ndarray
    h: np.ndarray
    mu: float = 0.0
    lam: float = 0.0
    p0: int | None = None
    amplitude_f: float = float("nan")
    amplitude_h: float = float("nan")

    @property
    def f_mu(self) -> np.ndarray:
        return self.f + self.mu

    @property
    def h_lam(self) -> np.ndarray:
        return self.h + self.lam

    def with_params(self, mu: float, lam: float) -> "CurvatureData":
        return replace(self, mu=float(mu), lam=float(lam))


def well_profile(t):
    """``sin^2(pi t)``: zero at integers, one at half-integers."""
    return np.sin(np.pi * np.asarray(t)) ** 2


def make_prescription(mesh: Mesh, p0_angle: float, amplitude_f: float, amplitude_h: float) -> CurvatureData:
    """Periodic wells with a common nondegenerate maximum on the hole boundary.

    ``f(x) = -a_f (sin^2(pi (x1 - q1)) + sin^2(pi (x2 - q2)))`` where ``q``
    is the boundary vertex closest to the polar angle ``p0_angle`` about the
    hole centre.  ``h`` is ``-a_h sin^2(pi s / P)`` with ``s`` the arc
    length from ``q`` along the boundary polygon and ``P`` its perimeter.
    """
    if not (amplitude_f > 0 and amplitude_h > 0):
        raise ValueError("amplitudes must be positive")
    loop = mesh.boundary_loop
    rel = mesh.displacement(mesh.hole_center, loop)
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    gap = np.abs(np.angle(np.exp(1j * (ang - p0_angle))))
    k0 = int(np.argmin(gap))
    q = mesh.vertices[loop[k0]]

    d = mesh.displacement(q)
    f = -amplitude_f * (well_profile(d[:, 0]) + well_profile(d[:, 1]))

    loop = np.roll(loop, -k0)
    seg = mesh.displacement(mesh.vertices[loop], np.roll(loop, -1))
    length = np.hypot(seg[:, 0], seg[:, 1])
    arc = np.concatenate([[0.0], np.cumsum(length)[:-1]])
    h = np.zeros(mesh.n_vertices)
    h[loop] = -amplitude_h * well_profile(arc / length.sum())
    return CurvatureData(
        f=f, h=h, p0=int(loop[0]), amplitude_f=float(amplitude_f), amplitude_h=float(amplitude_h)
    )


def constant_prescription(mesh: Mesh, f: float, h: float) -> CurvatureData:
    nv = mesh.n_vertices
    return CurvatureData(f=np.full(nv, float(f)), h=np.full(nv, float(h)))


@dataclass(frozen=True, eq=False)
class EnergyModel:
    """Mesh, operators, background curvature and prescription in one bundle.

    All methods are pure functions of the field ``u``.
    """

    mesh: Mesh
    ops: Operators
    background: BackgroundCurvature
    data: CurvatureData

    @classmethod
    def build(cls, mesh: Mesh, data: CurvatureData) -> "EnergyModel":
        ops = assemble_operators(mesh)
        return cls(mesh, ops, background_curvature(mesh, ops), data)

    def with_params(self, mu: float, lam: float) -> "EnergyModel":
        return replace(self, data=self.data.with_params(mu, lam))

    def with_data(self, data: CurvatureData) -> "EnergyModel":
        return replace(self, data=data)

    @property
    def mu(self) -> float:
        return self.data.mu

    @property
    def lam(self) -> float:
        return self.data.lam

    @property
    def size(self) -> int:
        return self.mesh.n_vertices

    def _exp(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.size,):
            raise ValueError(f"field must have shape ({self.size},), got {u.shape}")
        top = float(u.max())
        if not np.isfinite(u).all():
            raise ValueError("field has non-finite entries")
        if 2.0 * top > EXP_LIMIT:
            raise Divergence(top)
        eu = np.exp(u)
        return u, eu, eu * eu

    def energy(self, u) -> float:
        u, eu, e2u = self._exp(u)
        m, b = self.ops.mass, self.ops.boundary_mass
        bg = self.background
        return float(
            0.5 * u @ (self.ops.stiffness @ u)
            + np.sum(m * bg.K * u)
            - 0.5 * np.sum(m * self.data.f_mu * e2u)
            + np.sum(b * bg.kappa * u)
            - np.sum(b * self.data.h_lam * eu)
        )

    def gradient(self, u) -> np.ndarray:
        u, eu, e2u = self._exp(u)
        m, b = self.ops.mass, self.ops.boundary_mass
        bg = self.background
        return (
            self.ops.stiffness @ u
            + m * (bg.K - self.data.f_mu * e2u)
            + b * (bg.kappa - self.data.h_lam * eu)
        )

    def hessian_diagonal(self, u) -> np.ndarray:
        """Diagonal part ``H(u) - S`` of the Hessian."""
        _, eu, e2u = self._exp(u)
        return -2.0 * self.ops.mass * self.data.f_mu * e2u - self.ops.boundary_mass * self.data.h_lam * eu

    def hessian(self, u) -> sparse.csr_matrix:
        return (self.ops.stiffness + sparse.diags(self.hessian_diagonal(u))).tocsr()

    def hessian_apply(self, u, m) -> np.ndarray:
        """Matrix-free product ``H(u) m``."""
        return self.ops.stiffness @ m + self.hessian_diagonal(u) * m

    def pde_residual(self, u) -> tuple[float, float]:
        """Mass-weighted norms of the strong-form residuals.

        The gradient divided by the lumped area gives the interior residual
        and divided by the lumped boundary length gives the boundary one.
        """
        g = self.gradient(u)
        bnd = self.mesh.is_boundary
        m, b = self.ops.mass, self.ops.boundary_mass
        r_int = g[~bnd] / m[~bnd]
        r_bnd = g[bnd] / b[bnd]
        return float(np.sqrt(np.sum(m[~bnd] * r_int**2))), float(np.sqrt(np.sum(b[bnd] * r_bnd**2)))

    def curvature_integrals(self, u) -> tuple[float, float, float]:
        """``(int f_mu e^{2u}, int h_lam e^u, area + boundary + 2 pi)``."""
        _, eu, e2u = self._exp(u)
        area = float(np.sum(self.ops.mass * self.data.f_mu * e2u))
        bnd = float(np.sum(self.ops.boundary_mass * self.data.h_lam * eu))
        return area, bnd, area + bnd + 2.0 * np.pi

    def exp_masses(self, u) -> tuple[float, float]:
        """``(int e^{2u}, int_boundary e^u)``."""
        _, eu, e2u = self._exp(u)
        return float(self.ops.mass @ e2u), float(self.ops.boundary_mass @ eu)

    def perturbation_masses(self, u) -> tuple[float, float]:
        """``(mu/2 int e^{2u}, lam int_boundary e^u)``."""
        a, b = self.exp_masses(u)
        return 0.5 * self.mu * a, self.lam * b

    def total_curvature(self, u) -> float:
        """``int |f_mu| e^{2u} + int_boundary |h_lam| e^u``."""
        _, eu, e2u = self._exp(u)
        return float(
            self.ops.mass @ (np.abs(self.data.f_mu) * e2u)
            + self.ops.boundary_mass @ (np.abs(self.data.h_lam) * eu)
        )

    def h1_norm(self, u) -> float:
        """Discrete H1 norm, ``sqrt(u.(S + M) u)``."""
        return float(np.sqrt(u @ (self.ops.gram @ u)))

    def mass_norm(self, u) -> float:
        return float(np.sqrt(self.ops.mass @ (u * u)))


# functional aliases


def energy(model: EnergyModel, u) -> float:
    return model.energy(u)


def gradient(model: EnergyModel, u) -> np.ndarray:
    return model.gradient(u)


def hessian(model: EnergyModel, u) -> sparse.csr_matrix:
    return model.hessian(u)


def pde_residual(model: EnergyModel, u) -> tuple[float, float]:
    return model.pde_residual(u)


def curvature_integrals(model: EnergyModel, u) -> tuple[float, float, float]:
    return model.curvature_integrals(u)
