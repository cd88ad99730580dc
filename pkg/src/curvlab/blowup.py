"""Coupled parameter sweep towards zero, rescaling at the peak, bubble fits.

Coordinates near the common maximum ``p0`` are boundary-fitted: ``s`` is
arc length along the hole circle measured from ``p0`` and ``t`` the
distance from the circle into the surface.  A rescaled profile uses
``(s - s_n, t) / r_n`` so the boundary is the line ``t = 0``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .model import EnergyModel
from .mpass import (
    TestFunctionSpec,
    build_test_function,
    find_far_endpoint,
    mountain_pass,
)
from .solve import CriticalPoint, NoConvergence, newton, solve_base, solve_minimizer_pair

logger = logging.getLogger(__name__)


class PeakOnWrongRegion(UserWarning):
    """The global maximum of the field lies where ``f_mu < 0``."""


class FitDiverged(RuntimeError):
    pass


# --------------------------------------------------------------------------
# schedule


@dataclass(frozen=True)
class SweepSchedule:
    """Levels ``lam_k = lam0 2^-k`` with ``mu_k = lam_k^2``, ``k = 0..K``."""

    lam0: float = 0.2
    K: int = 4

    @property
    def lambda_levels(self) -> np.ndarray:
        return self.lam0 * 2.0 ** -np.arange(self.K + 1)

    @property
    def mu_levels(self) -> np.ndarray:
        return self.lambda_levels**2

    def window_ok(self) -> bool:
        lam, mu = self.lambda_levels, self.mu_levels
        return bool(np.all((lam**2 - lam**3 <= mu) & (mu <= lam**2 + lam**3)))

    def levels(self):
        return list(zip(range(self.K + 1), self.mu_levels.tolist(), self.lambda_levels.tolist()))


# --------------------------------------------------------------------------
# boundary-fitted chart


def chart_coordinates(mesh, p0: int, idx=None) -> np.ndarray:
    """``(s, t)`` of vertices relative to boundary vertex ``p0``."""
    rel = mesh.displacement(mesh.hole_center, idx)
    ref = mesh.displacement(mesh.hole_center, [p0])[0]
    rho = mesh.hole_radius
    theta = np.arctan2(rel[:, 1], rel[:, 0])
    theta0 = math.atan2(ref[1], ref[0])
    dtheta = np.angle(np.exp(1j * (theta - theta0)))
    return np.column_stack([rho * dtheta, np.hypot(rel[:, 0], rel[:, 1]) - rho])


def chart_to_plane(mesh, p0: int, st: np.ndarray) -> np.ndarray:
    """Inverse of :func:`chart_coordinates`, returned unwrapped near ``p0``."""
    rho = mesh.hole_radius
    ref = mesh.displacement(mesh.hole_center, [p0])[0]
    theta = math.atan2(ref[1], ref[0]) + st[:, 0] / rho
    r = rho + st[:, 1]
    return mesh.hole_center + np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def interpolate_p1(mesh, u, points, anchor) -> np.ndarray:
    """Piecewise-linear interpolation of nodal ``u`` at ``points``.

    ``points`` are plane positions near ``anchor``; triangles within reach
    are unwrapped around ``anchor``.  Points in the thin gaps between the
    boundary polygon and the circle take the value of the closest triangle
    with clamped barycentric weights.
    """
    points = np.asarray(points, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    reach = np.max(np.hypot(*(points - anchor).T)) + 2.0 / mesh.n
    coords = mesh.triangle_coords()
    shift = coords[:, 0, :] - anchor
    shift -= np.round(shift)
    coords = coords - coords[:, :1, :] + (anchor + shift)[:, None, :]
    near = np.hypot(*(coords.mean(axis=1) - anchor).T) < reach
    tri = mesh.triangles[near]
    c = coords[near]
    a, b, cc = c[:, 0], c[:, 1], c[:, 2]
    v0, v1 = b - a, cc - a
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    out = np.empty(len(points))
    vals = u[tri]
    for i, p in enumerate(points):
        d = p - a
        l1 = (d[:, 0] * v1[:, 1] - d[:, 1] * v1[:, 0]) / det
        l2 = (v0[:, 0] * d[:, 1] - v0[:, 1] * d[:, 0]) / det
        lam = np.column_stack([1.0 - l1 - l2, l1, l2])
        worst = lam.min(axis=1)
        j = int(np.argmax(worst))
        w = lam[j]
        if worst[j] < -1e-12:
            w = np.clip(w, 0.0, None)
            w /= w.sum()
        out[i] = w @ vals[j]
    return out


# --------------------------------------------------------------------------
# rescaling


@dataclass(frozen=True, eq=False)
class RescaledProfile:
    """Rescaled field near the peak.

    Attributes
    ----------
    x_n : (2,) ndarray
        Chart coordinates ``(s, t)`` of the peak.
    r_n : float
        Radius with ``r_n lam e^{u(x_n)} = 1``.
    s, t : (N,) ndarray
        Sample coordinates, ``((s - s_n), t) / r_n``; the boundary is ``t = 0``.
    values : (N,) ndarray
        ``u(x_n + r_n x) - u(x_n)``.
    t0_est : float
        Rescaled distance from the peak to the boundary.
    """

    x_n: np.ndarray
    r_n: float
    s: np.ndarray
    t: np.ndarray
    values: np.ndarray
    t0_est: float
    peak_vertex: int = -1
    peak_value: float = float("nan")
    lam: float = float("nan")
    on_positive_region: bool = True
    boundary_t: float = 0.0

    @property
    def identity_residual(self) -> float:
        return abs(self.r_n * self.lam * math.exp(self.peak_value) - 1.0)


def sample_grid(t0: float, half_width: float = 8.0, depth: float = 8.0, step: float = 0.25):
    s = np.arange(-half_width, half_width + 0.5 * step, step)
    t = t0 + np.arange(0.0, depth + 0.5 * step, step)
    S, T = np.meshgrid(s, t, indexing="xy")
    return S.ravel(), T.ravel()


def find_peak(model: EnergyModel, u, radius: float | None = None):
    """Peak of ``u`` over ``{f_mu >= 0}`` within ``radius`` of ``p0``.

    ``radius`` defaults to ``sqrt(mu / alpha1)`` with ``alpha1 = pi^2 a_f``,
    widened to two grid cells so that at least one ring of vertices is
    searched.  Returns ``(vertex, on_positive_region_globally)``.
    """
    data, mesh = model.data, model.mesh
    if data.p0 is None:
        raise ValueError("prescription has no marked maximum point")
    fmu = data.f_mu
    if radius is None:
        alpha1 = math.pi**2 * data.amplitude_f
        radius = math.sqrt(model.mu / alpha1) if model.mu > 0 else 0.0
    radius = max(radius, 2.0 / mesh.n)
    d = mesh.displacement(mesh.vertices[data.p0])
    dist = np.hypot(d[:, 0], d[:, 1])
    region = (fmu >= 0) & (dist <= radius)
    region[data.p0] = True
    cand = np.flatnonzero(region)
    k = int(cand[np.argmax(u[cand])])
    g = int(np.argmax(u))
    return k, bool(fmu[g] >= 0)


def rescale_profile(
    model: EnergyModel, u, mu=None, lam=None, half_width: float = 8.0, step: float = 0.25
) -> RescaledProfile:
    """Blow-up rescaling of ``u`` around its peak near ``p0``.

    ``mu`` and ``lam`` default to the model parameters.  A warning of
    class :class:`PeakOnWrongRegion` is logged when the global maximum sits
    where ``f_mu < 0``; the profile is still extracted.
    """
    mu = model.mu if mu is None else mu
    lam = model.lam if lam is None else lam
    if not lam > 0:
        raise ValueError("lam must be positive for the rescaling")
    mesh, p0 = model.mesh, model.data.p0
    u = np.asarray(u, dtype=float)
    k, ok = find_peak(model.with_params(mu, lam), u)
    if not ok:
        logger.warning("global maximum outside {f_mu >= 0}: %s", PeakOnWrongRegion.__doc__)
    peak = float(u[k])
    r_n = 1.0 / (lam * math.exp(peak))
    x_n = chart_coordinates(mesh, p0, [k])[0]
    t0_est = max(x_n[1], 0.0) / r_n
    S, T = sample_grid(t0_est, half_width, half_width, step)
    st = np.column_stack([x_n[0] + r_n * S, r_n * T])
    pts = chart_to_plane(mesh, p0, st)
    vals = interpolate_p1(mesh, u, pts, mesh.vertices[k]) - peak
    return RescaledProfile(
        x_n=x_n,
        r_n=r_n,
        s=S,
        t=T,
        values=vals,
        t0_est=t0_est,
        peak_vertex=k,
        peak_value=peak,
        lam=float(lam),
        on_positive_region=ok,
    )


# --------------------------------------------------------------------------
# bubble fitting


def bubble_values(params, s, t):
    """``log(2 L / (c L^2 + (s - s0)^2 + (t - t0 + d L)^2))``."""
    L, s0, t0, c, d = params
    den = c * L * L + (s - s0) ** 2 + (t - t0 + d * L) ** 2
    return np.log(2.0 * L) - np.log(den)


@dataclass(frozen=True)
class BubbleFit:
    Lambda: float
    s0: float
    t0: float
    c_inf: float
    d_inf: float
    rms_residual: float
    start: tuple = field(default=(), compare=False)
    n_converged: int = 0

    @property
    def params(self):
        return (self.Lambda, self.s0, self.t0, self.c_inf, self.d_inf)


START_LAMBDA = (0.5, 1.0, 2.0)
START_C = (0.0, 0.5, 1.0)
START_D = (0.0, 0.5, 1.0)


def _fit_one(args):
    s, t, y, t0, start = args
    L0, c0, d0 = start
    if c0 == 0.0:
        d0 = 1.0
    # initial shift and scale from the data
    s0 = float(s[np.argmax(y)])

    def resid(p):
        L, s0_, c, d = p
        return bubble_values((L, s0_, t0, c, d), s, t) - y

    lo = [1e-8, -np.inf, 0.0, 0.0]
    hi = [np.inf, np.inf, 1.0, 1.0]
    x0 = np.clip([L0, s0, c0, d0], [1e-8, -1e300, 0, 0], [1e300, 1e300, 1, 1])
    try:
        sol = least_squares(resid, x0, bounds=(lo, hi), xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    except (ValueError, FloatingPointError):
        return None
    if not np.all(np.isfinite(sol.fun)):
        return None
    L, s0_, c, d = sol.x
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    return rms, (L, s0_, t0, c, d), start


def fit_bubble(profile, workers: int = 1, min_samples: int = 200) -> BubbleFit:
    """Least-squares fit of the bubble family to a rescaled profile.

    The boundary offset ``t0`` is pinned to the profile's boundary line:
    the family depends on ``t0`` and ``d_inf`` only through
    ``t0 - d_inf Lambda``, so the data cannot separate them otherwise.  The
    other four parameters are fitted inside the box ``Lambda > 0``,
    ``c_inf, d_inf in [0, 1]``, starting from the 27 combinations of
    ``Lambda in {1/2, 1, 2}``, ``c_inf, d_inf in {0, 1/2, 1}`` (with
    ``d_inf = 1`` forced when ``c_inf = 0``).  A best fit with
    ``c_inf = 0`` is reported with ``d_inf = 1``.

    Raises
    ------
    FitDiverged
        If no start produces a finite fit.
    """
    s, t, y = np.asarray(profile.s), np.asarray(profile.t), np.asarray(profile.values)
    ok = np.isfinite(y)
    s, t, y = s[ok], t[ok], y[ok]
    if len(y) < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {len(y)}")
    t0 = float(getattr(profile, "boundary_t", 0.0))
    starts = [(L, c, d) for L in START_LAMBDA for c in START_C for d in START_D]
    tasks = [(s, t, y, t0, st) for st in starts]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_one, tasks))
    else:
        results = [_fit_one(x) for x in tasks]
    good = [r for r in results if r is not None]
    if not good:
        raise FitDiverged("every multi-start run failed")
    # ties broken by start order for determinism
    rms, p, start = min(good, key=lambda r: r[0])
    L, s0, t0, c, d = p
    if c <= 1e-12:
        c, d = 0.0, 1.0
    return BubbleFit(
        Lambda=float(L),
        s0=float(s0),
        t0=float(t0),
        c_inf=float(c),
        d_inf=float(d),
        rms_residual=float(rms),
        start=start,
        n_converged=len(good),
    )


@dataclass(frozen=True)
class SyntheticProfile:
    """Samples of a known bubble on the standard grid, for oracle tests."""

    s: np.ndarray
    t: np.ndarray
    values: np.ndarray
    boundary_t: float = 0.0


def synthetic_profile(params, noise: float = 0.0, seed: int = 0, half_width=8.0, step=0.25):
    """Bubble ``params`` sampled on ``|s| <= 8``, ``t0 <= t <= t0 + 8``."""
    L, s0, t0, c, d = params
    S, T = sample_grid(t0, half_width, half_width, step)
    y = bubble_values(params, S, T)
    if noise:
        y = y + noise * np.random.default_rng(seed).standard_normal(y.shape)
    return SyntheticProfile(S, T, y, boundary_t=t0)


# --------------------------------------------------------------------------
# sweep


@dataclass(eq=False)
class LevelRecord:
    k: int
    mu: float
    lam: float
    minimizer: CriticalPoint | None = None
    saddle: CriticalPoint | None = None
    diagnostics: dict = field(default_factory=dict)
    profile: RescaledProfile | None = None
    fit: BubbleFit | None = None
    error: str | None = None

    @property
    def converged(self) -> bool:
        return self.saddle is not None and self.error is None


def default_scale(mu: float, rho: float, fraction: float = 0.495) -> float:
    """Spike scale ``L`` putting the support radius at ``fraction * rho``."""
    return math.sqrt(mu) / (fraction * rho)


def _saddle_at_level(model, u0, minimizer, warm, P, tol, tol_path, L):
    """Saddle by Newton from the previous one, else by a fresh mountain pass."""
    if warm is not None:
        try:
            cp = newton(model, warm, tol=tol)
            if cp.negative_count >= 1 and model.mass_norm(cp.u - minimizer.u) > 1e-2:
                return cp, "warm"
        except NoConvergence:
            pass
    L = default_scale(model.mu, model.mesh.hole_radius) if L is None else L
    w = build_test_function(model.mesh, TestFunctionSpec(mu=model.mu, L=L, center=model.data.p0))
    v, s_used, _ = find_far_endpoint(model, u0, w, e_min=minimizer.energy)
    res = mountain_pass(model, u0, v, P=P, tol=tol, tol_path=tol_path, minimizer=minimizer)
    return res.saddle, "mountain-pass"


def sweep(
    model: EnergyModel,
    schedule: SweepSchedule,
    P: int = 33,
    tol: float = 1e-10,
    tol_path: float = 1e-4,
    L: float | None = None,
    fit: bool = True,
    workers: int = 1,
):
    """Minimizer and mountain-pass saddle at each level of the schedule.

    Levels run in order; each minimizer is continued from the previous one
    and each saddle is first sought by Newton from the previous saddle.
    Failures are recorded on the level and the sweep moves on.
    """
    if not schedule.window_ok():
        raise ValueError("schedule violates the coupling window")
    u0 = solve_base(model, tol=tol)
    records = []
    prev_min, prev_saddle = u0, None
    for k, mu, lam in schedule.levels():
        rec = LevelRecord(k=k, mu=mu, lam=lam)
        m = model.with_params(mu, lam)
        try:
            try:
                mn = solve_minimizer_pair(m, prev_min, tol=tol)
            except NoConvergence:
                mn = solve_minimizer_pair(m, u0, tol=tol, steps=8)
            rec.minimizer = mn
            saddle, how = _saddle_at_level(
                m, u0.u, mn, None if prev_saddle is None else prev_saddle.u, P, tol, tol_path, L
            )
            rec.saddle = saddle
            a_mass, b_mass = m.perturbation_masses(saddle.u)
            rec.diagnostics = {
                "method": how,
                "max_u": float(saddle.u.max()),
                "area_mass": a_mass,
                "boundary_mass": b_mass,
                "mass_total": a_mass + b_mass,
                "total_curvature": m.total_curvature(saddle.u),
                "c_level": saddle.energy,
                "min_energy": mn.energy,
                "separation": m.mass_norm(saddle.u - mn.u),
                "negative_count": saddle.negative_count,
            }
            prof = rescale_profile(m, saddle.u)
            rec.profile = prof
            rec.diagnostics.update(
                {
                    "r_n": prof.r_n,
                    "r_over_lambda": prof.r_n / lam,
                    "t0_est": prof.t0_est,
                    "peak_s": float(prof.x_n[0]),
                    "peak_t": float(prof.x_n[1]),
                    "peak_dist2_over_mu": float(prof.x_n @ prof.x_n) / mu,
                }
            )
            if fit:
                rec.fit = fit_bubble(prof, workers=workers)
            prev_min, prev_saddle = mn, saddle
        except Exception as exc:  # per-level failure is data
            rec.error = f"{type(exc).__name__}: {exc}"
            logger.info("level %d failed: %s", k, rec.error)
        records.append(rec)
    return records


def count_blowup_points(records, threshold: float | None = None, mesh=None):
    """Cluster the peak locations of converged levels.

    Peaks within ``threshold`` (chart distance) of each other are merged;
    the default threshold is four grid cells when ``mesh`` is given, else
    0.1.  Returns a dict with ``N``, cluster ``centers``, the allowed maximum
    from the fitted ``(c_inf, d_inf)`` case table, and a ``consistent``
    flag.
    """
    if threshold is None:
        threshold = 4.0 / mesh.n if mesh is not None else 0.1
    pts = [r.profile.x_n for r in records if r.converged and r.profile is not None]
    centers: list[list[np.ndarray]] = []
    for p in pts:
        for cl in centers:
            if np.hypot(*(np.mean(cl, axis=0) - p)) < threshold:
                cl.append(p)
                break
        else:
            centers.append([p])
    N = len(centers)
    fits = [r.fit for r in records if r.converged and r.fit is not None]
    allowed = 3
    if fits:
        last = fits[-1]
        if last.c_inf == 0.0:
            allowed = 1
        elif last.d_inf == 0.0:
            allowed = 2
    return {
        "N": N,
        "centers": [np.mean(cl, axis=0) for cl in centers],
        "allowed": allowed,
        "consistent": bool(1 <= N <= min(3, allowed)),
    }
