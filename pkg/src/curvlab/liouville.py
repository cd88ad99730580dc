"""Half-plane Liouville profiles: closed-form bubbles, masses, Pohozaev test.

A profile is a function ``w(s, t)`` on the half-plane ``t >= t0`` with
boundary line ``t = t0`` (outward normal ``-e_t``).  It is paired with a
curvature function ``F(x) = c + (A x, x)`` in the interior and a constant
boundary curvature ``g``, where ``x = (s, t - t0)`` puts the origin on the
boundary line.  The system in view is

    -Lap w = F e^{2w}   (t > t0),       dw/dnu = g e^{w}   (t = t0).

Integrals over the half-plane are computed on half-disks of growing radius
and extrapolated to infinite radius in powers of ``1/R``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import least_squares

TWO_PI = 2.0 * math.pi


class DomainError(ValueError):
    """Bubble parameters outside the admissible box."""


class NonConvergentTail(RuntimeError):
    """Extrapolants at different truncation radii disagree."""


class PreconditionError(ValueError):
    pass


class Verdict(enum.Enum):
    INAPPLICABLE = "inapplicable"
    INCONSISTENT = "inconsistent"
    CONSISTENT = "consistent"


@dataclass(frozen=True, eq=False)
class HalfPlaneProfile:
    """A function on ``{t >= t0}`` with its derivatives.

    ``w``, ``grad`` and ``lap`` take arrays ``s, t``; ``grad`` returns the
    pair ``(w_s, w_t)``.  ``c`` and ``g`` are the interior constant and the
    boundary curvature of the target system, ``F_matrix`` the quadratic part
    of ``F``.  ``params`` holds the bubble parameters when known.
    """

    w: Callable
    grad: Callable
    lap: Callable
    t0: float = 0.0
    c: float = 1.0
    g: float = 1.0
    F_matrix: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    truncation_radii: tuple = (250.0, 500.0, 1000.0)
    scale: float = 1.0
    params: tuple | None = None

    def with_F(self, A, c: float | None = None, g: float | None = None) -> "HalfPlaneProfile":
        A = np.asarray(A, dtype=float)
        if A.shape != (2, 2) or not np.allclose(A, A.T):
            raise ValueError("A must be a symmetric 2x2 matrix")
        return replace(
            self, F_matrix=A, c=self.c if c is None else float(c), g=self.g if g is None else float(g)
        )

    def local(self, s, t):
        """Coordinates with the origin on the boundary line."""
        return np.asarray(s, dtype=float), np.asarray(t, dtype=float) - self.t0

    def F(self, s, t):
        x, y = self.local(s, t)
        A = self.F_matrix
        return self.c + A[0, 0] * x * x + 2 * A[0, 1] * x * y + A[1, 1] * y * y

    def x_dot_grad_F(self, s, t):
        """``<x, grad F> = 2 (A x, x)``."""
        return 2.0 * (self.F(s, t) - self.c)

    def interior_residual(self, s, t):
        return -self.lap(s, t) - self.F(s, t) * np.exp(2.0 * self.w(s, t))

    def boundary_residual(self, s):
        s = np.asarray(s, dtype=float)
        t = np.full_like(s, self.t0)
        return -self.grad(s, t)[1] - self.g * np.exp(self.w(s, t))


# --------------------------------------------------------------------------
# closed-form bubbles


def bubble_closed_form(Lambda, s0=0.0, t0=0.0, c_inf=1.0, d_inf=0.0, check_box: bool = True) -> HalfPlaneProfile:
    """``w = log(2L / (c L^2 + (s - s0)^2 + (t - t0 + d L)^2))``.

    Solves ``-Lap w = c e^{2w}`` for ``t > t0`` and ``dw/dnu = d e^w`` on
    ``t = t0``.  With ``check_box`` the parameters must satisfy
    ``Lambda > 0``, ``t0 >= 0``, ``(c, d)`` in ``[0, 1]^2`` with ``d = 1``
    when ``c = 0``.
    """
    L, c, d = float(Lambda), float(c_inf), float(d_inf)
    if not L > 0:
        raise DomainError("Lambda must be positive")
    if check_box:
        if not (0.0 <= c <= 1.0 and 0.0 <= d <= 1.0):
            raise DomainError("c_inf and d_inf must lie in [0, 1]")
        if c == 0.0 and d != 1.0:
            raise DomainError("d_inf must be 1 when c_inf = 0")
        if t0 < 0:
            raise DomainError("t0 must be nonnegative")
    if c == 0.0 and d == 0.0:
        raise DomainError("c_inf and d_inf cannot both vanish")
    log2L = math.log(2.0 * L)
    cL2 = c * L * L
    shift = t0 - d * L

    def den(s, t):
        return cL2 + (s - s0) ** 2 + (t - shift) ** 2

    def w(s, t):
        return log2L - np.log(den(s, t))

    def grad(s, t):
        D = den(s, t)
        return -2.0 * (s - s0) / D, -2.0 * (t - shift) / D

    def lap(s, t):
        D = den(s, t)
        return -4.0 * cL2 / (D * D)

    return HalfPlaneProfile(
        w=w, grad=grad, lap=lap, t0=float(t0), c=c, g=d, scale=L, params=(L, float(s0), float(t0), c, d)
    )


def beta_value(c_inf: float, d_inf: float) -> float:
    """``2 pi d / sqrt(d^2 + c)``."""
    return TWO_PI * d_inf / math.sqrt(d_inf * d_inf + c_inf)


def bubble_masses_exact(c_inf: float, d_inf: float) -> tuple[float, float]:
    """Closed-form ``(V0, H0)`` of a half-plane bubble.

    ``H0 = 2 pi / sqrt(c + d^2)``; ``V0 = (2 pi - beta) / c`` for ``c > 0``
    and ``V0 = pi`` for ``c = 0`` (then ``d = 1``).
    """
    H0 = TWO_PI / math.sqrt(c_inf + d_inf * d_inf)
    if c_inf == 0.0:
        V0 = math.pi / d_inf**2
    else:
        V0 = (TWO_PI - beta_value(c_inf, d_inf)) / c_inf
    return V0, H0


# --------------------------------------------------------------------------
# quadrature


def _panels(a, b, edges_inner, n_gl):
    x, wts = np.polynomial.legendre.leggauss(n_gl)
    edges = np.concatenate([[a], edges_inner, [b]])
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * wts[None, :]
    return nodes.ravel(), weights.ravel()


def _radial_rule(R, scale, n_gl=16, per_decade=6):
    lo = 1e-4 * scale
    if R <= lo:
        return _panels(0.0, R, np.array([]), n_gl)
    k = max(2, int(math.ceil(per_decade * math.log10(R / lo))))
    edges = np.geomspace(lo, R, k + 1)[:-1]
    return _panels(0.0, R, edges, n_gl)


def halfdisk_integral(fn, R, t0=0.0, scale=1.0, n_gl=16, n_theta=8):
    """``int fn(s, t)`` over the half-disk of radius ``R`` centred at ``(0, t0)``."""
    r, wr = _radial_rule(R, scale, n_gl)
    th, wth = _panels(0.0, math.pi, np.linspace(0, math.pi, n_theta + 1)[1:-1], n_gl)
    rr, tt = np.meshgrid(r, th, indexing="ij")
    W = (wr * r)[:, None] * wth[None, :]
    s = rr * np.cos(tt)
    t = t0 + rr * np.sin(tt)
    return float(np.sum(W * fn(s, t)))


def segment_integral(fn, R, scale=1.0, n_gl=16):
    """``int_{-R}^{R} fn(s) ds`` with panels graded towards ``s = 0``."""
    x, w = _radial_rule(R, scale, n_gl)
    return float(np.sum(w * (fn(x) + fn(-x))))


def _richardson(R, v):
    M = np.column_stack([np.ones(3), 1.0 / R, 1.0 / R**2])
    return float(np.linalg.solve(M, v)[0])


def extrapolate(radii, values, inner_value=None):
    """Limit of ``I(R) = I + a/R + b/R^2`` through the three samples.

    The error bar compares this limit with the one through ``R1/2, R1, R2``
    (``inner_value`` is the sample at ``R1/2``); without it the two-term
    limit of the outer pair is used instead.  Returns ``(limit, spread)``.
    """
    R = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    lim = _richardson(R, v)
    if inner_value is None:
        M2 = np.column_stack([np.ones(2), 1.0 / R[1:]])
        other = float(np.linalg.solve(M2, v[1:])[0])
    else:
        other = _richardson(np.array([R[0] / 2, R[0], R[1]]), np.array([inner_value, v[0], v[1]]))
    return lim, abs(lim - other)


@dataclass(frozen=True)
class LiouvilleReport:
    """Half-plane integrals of a profile and the Pohozaev balance.

    ``K0 = int F e^{2w}``, ``H0 = int_boundary e^w``, ``V0 = int e^{2w}``,
    ``d = (K0 + g H0) / pi`` and ``residual = pohozaev_lhs - d (d - 2)``.
    ``errors`` holds the extrapolation error bar of each quantity.
    """

    V0: float
    H0: float
    K0: float = float("nan")
    d: float = float("nan")
    pohozaev_lhs: float = float("nan")
    residual: float = float("nan")
    beta: float | None = None
    errors: dict = field(default_factory=dict)
    converged: bool = True


def _extrapolated(profile, fn, kind, tol, strict=True):
    radii = list(profile.truncation_radii)
    vals = []
    for R in [radii[0] / 2] + radii:
        if kind == "area":
            vals.append(halfdisk_integral(fn, R, profile.t0, profile.scale))
        else:
            vals.append(segment_integral(fn, R, profile.scale))
    lim, spread = extrapolate(radii, vals[1:], inner_value=vals[0])
    ok = spread <= 10.0 * tol and math.isfinite(lim)
    if strict and not ok:
        raise NonConvergentTail(
            f"extrapolants differ by {spread:.3e} (> 10 x {tol:.1e}); tail does not decay fast enough"
        )
    return lim, spread, ok, vals[-1]


def halfplane_masses(profile: HalfPlaneProfile, tol: float = 1e-6, strict: bool = True) -> LiouvilleReport:
    """``V0 = int e^{2w}`` and ``H0 = int_boundary e^w`` with error bars.

    ``beta`` is reported when the profile is a closed-form bubble.
    """
    V0, eV, okV, _ = _extrapolated(profile, lambda s, t: np.exp(2.0 * profile.w(s, t)), "area", tol, strict)
    H0, eH, okH, _ = _extrapolated(
        profile, lambda s: np.exp(profile.w(s, np.full_like(s, profile.t0))), "line", tol, strict
    )
    beta = None
    if profile.params is not None:
        _, _, _, c, d = profile.params
        beta = beta_value(c, d)
    return LiouvilleReport(V0=V0, H0=H0, beta=beta, errors={"V0": eV, "H0": eH}, converged=bool(okV and okH))


def pohozaev_residual(profile: HalfPlaneProfile, tol: float = 1e-6, strict: bool = True) -> LiouvilleReport:
    """Masses, exponent ``d`` and the Pohozaev balance of a profile.

    ``pohozaev_lhs = (1/pi) int <x, grad F> e^{2w}``.  With ``strict``
    a slowly decaying tail raises :class:`NonConvergentTail`; otherwise the
    truncated value at the largest radius is reported and ``converged`` is
    False.
    """
    base = halfplane_masses(profile, tol, strict)
    e2w = lambda s, t: np.exp(2.0 * profile.w(s, t))  # noqa: E731
    K0, eK, okK, _ = _extrapolated(profile, lambda s, t: profile.F(s, t) * e2w(s, t), "area", tol, strict)
    if np.any(profile.F_matrix):
        P, eP, okP, P_last = _extrapolated(
            profile, lambda s, t: profile.x_dot_grad_F(s, t) * e2w(s, t), "area", tol, strict
        )
        if not okP:
            P = P_last
        lhs = P / math.pi
    else:
        lhs, eP, okP = 0.0, 0.0, True
    d = (K0 + profile.g * base.H0) / math.pi
    return replace(
        base,
        K0=K0,
        d=d,
        pohozaev_lhs=lhs,
        residual=lhs - d * (d - 2.0),
        errors={**base.errors, "K0": eK, "lhs": eP / math.pi},
        converged=bool(base.converged and okK and okP),
    )


# --------------------------------------------------------------------------
# nonexistence certificate


def pde_residual_norm(profile: HalfPlaneProfile, R: float | None = None) -> float:
    """Relative L1 residual of the interior and boundary equations on a half-disk."""
    R = profile.truncation_radii[0] if R is None else R
    e2w = lambda s, t: np.exp(2.0 * profile.w(s, t))  # noqa: E731
    num_i = halfdisk_integral(lambda s, t: np.abs(profile.interior_residual(s, t)), R, profile.t0, profile.scale)
    den_i = halfdisk_integral(lambda s, t: np.abs(profile.F(s, t)) * e2w(s, t), R, profile.t0, profile.scale)
    num_b = segment_integral(lambda s: np.abs(profile.boundary_residual(s)), R, profile.scale)
    den_b = segment_integral(
        lambda s: np.abs(profile.g) * np.exp(profile.w(s, np.full_like(s, profile.t0))), R, profile.scale
    )
    return (num_i + num_b) / (den_i + den_b)


@dataclass(frozen=True)
class Certificate:
    verdict: Verdict
    pde_residual: float
    d: float = float("nan")
    pohozaev_lhs: float = float("nan")
    identity_gap: float = float("nan")
    eps_d: float = 0.05
    eps_p: float = 1e-3
    pde_tol: float = 0.05
    converged: bool = True


def nonexistence_certificate(
    A, profile: HalfPlaneProfile, pde_tol: float = 0.05, eps_d: float = 0.05, eps_p: float = 1e-3, tol: float = 1e-6
) -> Certificate:
    """Test a candidate against ``-Lap w = (1 + (Ax, x)) e^{2w}``, ``dw/dnu = e^w``.

    With ``A`` negative definite any solution would need ``d >= 2`` and
    ``(1/pi) int <x, grad F> e^{2w} = d (d - 2) >= 0`` while the left side
    is negative.  Candidates whose PDE residual exceeds ``pde_tol`` are
    INAPPLICABLE.  Otherwise the verdict is INCONSISTENT when
    ``d >= 2 - eps_d`` and the left side is below ``-eps_p``, and
    CONSISTENT if neither contradiction gate fires.

    Raises
    ------
    PreconditionError
        If ``A`` is not symmetric negative definite.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (2, 2) or not np.allclose(A, A.T):
        raise PreconditionError("A must be a symmetric 2x2 matrix")
    if not np.all(np.linalg.eigvalsh(A) < 0):
        raise PreconditionError("A must be negative definite")
    prof = profile.with_F(A, c=1.0, g=1.0)
    res = pde_residual_norm(prof)
    if not res < pde_tol:
        return Certificate(Verdict.INAPPLICABLE, res, eps_d=eps_d, eps_p=eps_p, pde_tol=pde_tol)
    rep = pohozaev_residual(prof, tol=tol, strict=False)
    bad = rep.d >= 2.0 - eps_d and rep.pohozaev_lhs < -eps_p
    return Certificate(
        Verdict.INCONSISTENT if bad else Verdict.CONSISTENT,
        res,
        d=rep.d,
        pohozaev_lhs=rep.pohozaev_lhs,
        identity_gap=rep.residual,
        eps_d=eps_d,
        eps_p=eps_p,
        pde_tol=pde_tol,
        converged=rep.converged,
    )


# --------------------------------------------------------------------------
# candidate search for the quadratic-curvature system


def damped_bubble(Lambda, gamma, width) -> HalfPlaneProfile:
    """Boundary bubble (``c = d = 1``) times ``(1 + |x|^2 / width^2)^(-gamma)``.

    The extra factor makes ``|x|^2 e^{2w}`` integrable for ``gamma > 0``.
    """
    L, gm, W = float(Lambda), float(gamma), float(width)
    log2L = math.log(2.0 * L)

    def w(s, t):
        D = L * L + s * s + (t + L) ** 2
        return log2L - np.log(D) - gm * np.log1p((s * s + t * t) / (W * W))

    def grad(s, t):
        D = L * L + s * s + (t + L) ** 2
        q = W * W + s * s + t * t
        return -2.0 * s / D - 2.0 * gm * s / q, -2.0 * (t + L) / D - 2.0 * gm * t / q

    def lap(s, t):
        D = L * L + s * s + (t + L) ** 2
        q = W * W + s * s + t * t
        return -4.0 * L * L / (D * D) - 4.0 * gm * W * W / (q * q)

    return HalfPlaneProfile(w=w, grad=grad, lap=lap, t0=0.0, c=1.0, g=1.0, scale=min(L, W), params=None)


def fit_candidates(
    A,
    starts=((0.3, 0.05, 3.0), (0.1, 0.05, 5.0), (0.2, 0.1, 2.0)),
    bounds=((0.01, 0.01, 1.0), (2.0, 1.0, 20.0)),
    n_radial: int = 48,
    n_theta: int = 24,
    R: float = 50.0,
):
    """Damped-bubble candidates fitted to the system with ``F = 1 + (Ax, x)``.

    Each start ``(Lambda, gamma, width)`` is refined by box-constrained least
    squares on the pointwise residuals, weighted by ``e^{2w}`` so the far
    field does not dominate.  The box keeps ``Lambda`` away from zero (where
    the candidates collapse to a point) and ``gamma`` positive (so the
    Pohozaev integrand is integrable).
    """
    A = np.asarray(A, dtype=float)
    r = np.geomspace(1e-3, R, n_radial)
    th = np.linspace(0.0, math.pi, n_theta)
    rr, tt = np.meshgrid(r, th, indexing="ij")
    s, t = (rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()
    sb = np.concatenate([-r[::-1], r])
    wi = np.sqrt((rr * np.gradient(r)[:, None] * (math.pi / n_theta)).ravel())
    wb = np.sqrt(np.abs(np.gradient(sb)))

    def resid(p):
        prof = damped_bubble(*p).with_F(A, c=1.0, g=1.0)
        ri = prof.interior_residual(s, t) * wi
        rb = prof.boundary_residual(sb) * wb
        return np.concatenate([ri, rb])

    out = []
    for x0 in starts:
        sol = least_squares(resid, x0, bounds=bounds, xtol=1e-12, ftol=1e-12)
        out.append(damped_bubble(*sol.x).with_F(A, c=1.0, g=1.0))
    return out
