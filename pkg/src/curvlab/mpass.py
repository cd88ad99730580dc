"""Mountain-pass saddles between the perturbed minimizer and a far endpoint.

The far endpoint is ``u0 + s w_mu`` where ``w_mu`` is a logarithmic spike
centred on the common maximum of ``f`` and ``h``.  A discrete path from
``u0`` to it is relaxed by H1-preconditioned descent restricted, through a
cutoff, to the high-energy part of the path; nodes are kept equidistant in
the H1 metric.  The highest node is finally polished by Newton's method.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .mesh import Mesh
from .model import Divergence, EnergyModel
from .solve import CriticalPoint, NoConvergence, newton

logger = logging.getLogger(__name__)


class ResolutionError(ValueError):
    """The spike support holds too few mesh vertices."""


class ScanExhausted(RuntimeError):
    """No amplitude up to the scan limit pushes the energy low enough."""


class Collapse(RuntimeError):
    """The path maximum fell back onto the minimizer."""


@dataclass(frozen=True)
class TestFunctionSpec:
    """Logarithmic spike ``w_mu(x) = z_mu(L |x| / sqrt(mu))`` around ``center``.

    ``z_mu(r)`` is ``-log mu`` for ``r <= mu``, ``-log r`` for
    ``mu <= r <= 1`` and 0 beyond, so the support has radius
    ``sqrt(mu) / L``.
    """

    __test__ = False  # keep pytest from collecting the class by name

    mu: float
    L: float = 1.0
    center: int = 0
    s: float = 1.0

    @property
    def support_radius(self) -> float:
        return math.sqrt(self.mu) / self.L

    @property
    def plateau_radius(self) -> float:
        return self.mu * self.support_radius


def log_spike(r, mu):
    """``z_mu`` evaluated at radii ``r``."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inner = r <= mu
    mid = (r > mu) & (r < 1.0)
    out[inner] = -math.log(mu)
    out[mid] = -np.log(r[mid])
    return out


def build_test_function(mesh: Mesh, spec: TestFunctionSpec, min_vertices: int = 8) -> np.ndarray:
    """Nodal samples of ``s * w_mu`` in the flat chart about ``spec.center``.

    Raises
    ------
    ResolutionError
        If the support radius reaches half the hole radius, or fewer than
        ``min_vertices`` vertices fall inside the support.
    """
    if not spec.mu > 0:
        raise ValueError("mu must be positive")
    R = spec.support_radius
    if R >= 0.5 * mesh.hole_radius:
        raise ResolutionError(
            f"support radius {R:.4g} must stay below half the hole radius; increase L"
        )
    d = mesh.displacement(mesh.vertices[spec.center])
    r = np.hypot(d[:, 0], d[:, 1])
    inside = int(np.sum(r < R))
    if inside < min_vertices:
        raise ResolutionError(
            f"only {inside} vertices inside the spike support of radius {R:.3g}; raise n or mu"
        )
    return spec.s * log_spike(r / R, spec.mu)


def safe_energy(model: EnergyModel, u) -> float:
    """Energy with overflow read as minus infinity."""
    try:
        return model.energy(u)
    except Divergence:
        return -math.inf


def find_far_endpoint(
    model: EnergyModel, u0, w_mu, e_min: float | None = None, margin: float = 1.0, s_max: float = 2.0**20
):
    """Double ``s`` from 1 until ``I(u0 + s w) < e_min - margin``.

    ``e_min`` defaults to ``I(u0)``.  Returns ``(v, s, energies)``.
    """
    if e_min is None:
        e_min = model.energy(u0)
    s = 1.0
    energies = []
    while s <= s_max:
        v = u0 + s * w_mu
        e = safe_energy(model, v)
        energies.append((s, e))
        if e < e_min - margin:
            if not math.isfinite(e):
                # overflowed; bisect back to a finite endpoint
                lo = s / 2
                hi = s
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    em = safe_energy(model, u0 + mid * w_mu)
                    if math.isfinite(em) and em < e_min - margin:
                        hi = mid
                        break
                    if math.isfinite(em):
                        lo = mid
                    else:
                        hi = mid
                s = hi
                v = u0 + s * w_mu
                e = safe_energy(model, v)
                if not math.isfinite(e):
                    raise ScanExhausted("endpoint energy overflowed before dropping below the target")
                energies.append((s, e))
            return v, s, energies
        s *= 2.0
    raise ScanExhausted(f"energy stayed above {e_min - margin:.6g} for s up to {s_max:g}")


@dataclass(eq=False)
class PathState:
    nodes: np.ndarray
    energies: np.ndarray
    history: list = field(default_factory=list)

    @property
    def max_index(self) -> int:
        return int(np.argmax(self.energies))

    @property
    def max_energy(self) -> float:
        return float(self.energies.max())


@dataclass(frozen=True, eq=False)
class MountainPassResult:
    c_level: float
    saddle: CriticalPoint
    path: PathState
    area_mass: float
    boundary_mass: float
    path_iterations: int
    path_max: float
    gap: float


def cutoff(e, top, width, floor):
    """Smooth weight: 1 within ``width/2`` of ``top``, ``floor`` below ``top - width``."""
    x = np.clip((np.asarray(e) - (top - width)) / (0.5 * width), 0.0, 1.0)
    return floor + (1.0 - floor) * x * x * (3.0 - 2.0 * x)


def _equidistribute(nodes, B):
    diffs = np.diff(nodes, axis=0)
    seg = np.sqrt(np.einsum("ij,ij->i", diffs, (B @ diffs.T).T))
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if arc[-1] == 0:
        return nodes
    target = np.linspace(0.0, arc[-1], len(nodes))
    out = np.empty_like(nodes)
    out[0], out[-1] = nodes[0], nodes[-1]
    idx = np.clip(np.searchsorted(arc, target[1:-1], side="right") - 1, 0, len(nodes) - 2)
    span = np.where(seg[idx] > 0, seg[idx], 1.0)
    w = ((target[1:-1] - arc[idx]) / span)[:, None]
    out[1:-1] = (1.0 - w) * nodes[idx] + w * nodes[idx + 1]
    return out


def _tangents(nodes, B):
    t = np.zeros_like(nodes)
    t[1:-1] = nodes[2:] - nodes[:-2]
    t[0] = nodes[1] - nodes[0]
    t[-1] = nodes[-1] - nodes[-2]
    norms = np.sqrt(np.einsum("ij,ij->i", t, (B @ t.T).T))
    return t / np.where(norms > 0, norms, 1.0)[:, None]


def relax_path(
    model: EnergyModel,
    u0,
    v,
    P: int = 33,
    tol_path: float = 1e-4,
    max_iter: int = 2000,
    step: float = 0.5,
    floor: float = 0.0,
    max_move: float = 0.25,
    stall_window: int = 20,
) -> PathState:
    """Descent-deformation of the straight path from ``u0`` to ``v``.

    Every interior node moves along ``-B^{-1} grad I`` scaled by the cutoff
    weight of its energy, with a per-node backtracking that forbids energy
    increase.  The cutoff is 1 within a band below the current path maximum
    and decays to ``floor`` further down; with the default ``floor = 0``
    low nodes stay put, which keeps them from running off towards the
    unbounded-below region.  Nodes are then redistributed at equal H1
    arclength.  Stops when the component of the top node's preconditioned
    gradient normal to the path has H1 norm below ``tol_path``, or when the
    path maximum changed by less than ``tol_path`` (relative) over the last
    ``stall_window`` iterations.  Moves are capped at ``max_move`` times the
    mean node spacing.
    """
    if P < 3:
        raise ValueError("need at least three path nodes")
    B = model.ops.gram
    Binv = splu(B.tocsc())
    t = np.linspace(0.0, 1.0, P)[:, None]
    nodes = (1.0 - t) * np.asarray(u0)[None, :] + t * np.asarray(v)[None, :]
    energies = np.array([safe_energy(model, x) for x in nodes])
    if not energies[-1] < energies[0]:
        raise ValueError("far endpoint must have lower energy than the start")
    state = PathState(nodes, energies)
    eta = np.full(P, step)
    for it in range(max_iter):
        top = state.max_energy
        width = max(0.5 * (top - max(energies[0], energies[-1])), 1e-12)
        phi = cutoff(energies, top, width, floor)
        kmax = state.max_index
        tau = _tangents(nodes, B)
        diffs = np.diff(nodes, axis=0)
        spacing = float(np.mean(np.sqrt(np.einsum("ij,ij->i", diffs, (B @ diffs.T).T))))
        normal_norm = math.inf
        for k in range(1, P - 1):
            if phi[k] <= 0.0:
                continue
            try:
                g = model.gradient(nodes[k])
            except Divergence:
                continue
            d = Binv.solve(g)
            gd = float(g @ d)
            if k == kmax:
                along = float(tau[k] @ g)
                normal_norm = math.sqrt(max(gd - along * along, 0.0))
            # cap the H1 length of a move at a fraction of the node spacing
            a = min(eta[k], max_move * spacing / math.sqrt(max(gd, 1e-300))) * phi[k]
            while a > 1e-14 * phi[k]:
                trial = nodes[k] - a * d
                e = safe_energy(model, trial)
                if math.isfinite(e) and e <= energies[k] - 1e-4 * a * gd:
                    nodes[k] = trial
                    energies[k] = e
                    break
                a *= 0.5
            eta[k] = min(step, 2.0 * a / phi[k]) if a > 1e-14 * phi[k] else eta[k] * 0.5
        nodes = _equidistribute(nodes, B)
        energies = np.array([safe_energy(model, x) for x in nodes])
        state = PathState(nodes, energies, state.history)
        state.history.append((it, state.max_energy, normal_norm))
        if normal_norm < tol_path:
            break
        # the normal gradient is only resolved to the node spacing, so a
        # stalled maximum also ends the relaxation
        if it >= stall_window:
            old = state.history[-1 - stall_window][1]
            if abs(state.max_energy - old) < tol_path * (1.0 + abs(old)):
                break
    return state


def mountain_pass(
    model: EnergyModel,
    u0,
    v,
    P: int = 33,
    tol: float = 1e-10,
    tol_path: float = 1e-4,
    max_iter: int = 2000,
    minimizer: CriticalPoint | None = None,
    floor: float = 0.0,
) -> MountainPassResult:
    """Locate the mountain-pass saddle and its level.

    Raises
    ------
    Collapse
        If the polished point is the minimizer or has no negative direction.
    NoConvergence
        If Newton fails from every top node tried.
    """
    if P < 16:
        raise ValueError("P must be at least 16")
    e0, ev = safe_energy(model, u0), safe_energy(model, v)
    if not ev < e0:
        raise ValueError("I(v) must be below I(u0)")
    path = relax_path(model, u0, v, P=P, tol_path=tol_path, max_iter=max_iter, floor=floor)
    order = np.argsort(path.energies)[::-1]
    last_error = None
    for k in order[:3]:
        if k in (0, P - 1):
            continue
        try:
            cp = newton(model, path.nodes[k], tol=tol)
        except (NoConvergence, Divergence) as exc:
            last_error = exc
            continue
        if minimizer is not None and model.mass_norm(cp.u - minimizer.u) < 1e-6:
            last_error = Collapse("Newton polish returned the minimizer; increase P")
            continue
        if cp.negative_count < 1:
            last_error = Collapse(f"polished point has no negative direction (sigma_min={cp.min_eigenvalue:.3e})")
            continue
        area, bnd = model.perturbation_masses(cp.u)
        e_min = minimizer.energy if minimizer is not None else e0
        return MountainPassResult(
            c_level=cp.energy,
            saddle=cp,
            path=path,
            area_mass=area,
            boundary_mass=bnd,
            path_iterations=len(path.history),
            path_max=path.max_energy,
            gap=cp.energy - e_min,
        )
    if isinstance(last_error, Collapse):
        raise last_error
    raise NoConvergence(f"saddle polish failed: {last_error}", best=path.nodes[path.max_index])


def _scan_cell(args):
    model, u0, v, P, tol, tol_path, minimizer = args
    try:
        res = mountain_pass(model, u0, v, P=P, tol=tol, tol_path=tol_path, minimizer=minimizer)
        return res.c_level, None
    except Exception as exc:  # recorded per cell
        return math.nan, f"{type(exc).__name__}: {exc}"


def level_monotonicity_scan(
    model: EnergyModel,
    mus,
    lams,
    u0,
    v,
    P_values=(17, 33, 65),
    tol: float = 1e-10,
    tol_path: float = 1e-4,
    workers: int = 1,
    minimizers: dict | None = None,
):
    """Table of mountain-pass levels over a parameter grid.

    The same far endpoint ``v`` is used in every cell so that levels are
    comparable.  ``delta_path`` is the largest spread of the level across
    the values in ``P_values``.  Returns a dict with ``c`` (rows indexed by
    ``mus``), ``delta_path``, per-cell spreads and errors.
    """
    tasks = []
    for mu in mus:
        for lam in lams:
            m = model.with_params(mu, lam)
            mins = None if minimizers is None else minimizers.get((mu, lam))
            for P in P_values:
                tasks.append((m, u0, v, P, tol, tol_path, mins))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_scan_cell, tasks))
    else:
        out = [_scan_cell(t) for t in tasks]
    nP = len(P_values)
    levels = np.array([o[0] for o in out]).reshape(len(mus), len(lams), nP)
    errors = {}
    for idx, o in enumerate(out):
        if o[1] is not None:
            i, rem = divmod(idx, len(lams) * nP)
            j, p = divmod(rem, nP)
            errors[(mus[i], lams[j], P_values[p])] = o[1]
    spread = np.nanmax(levels, axis=2) - np.nanmin(levels, axis=2)
    # report the level at the middle node count
    c = levels[:, :, nP // 2]
    return {
        "mus": list(mus),
        "lams": list(lams),
        "P_values": list(P_values),
        "levels": levels,
        "c": c,
        "spread": spread,
        "delta_path": float(np.nanmax(spread)) if np.isfinite(spread).any() else math.nan,
        "errors": errors,
    }


def check_monotone(table, delta=None):
    """Violations of ``c`` being non-increasing along each axis (beyond ``delta``)."""
    c = table["c"]
    delta = table["delta_path"] if delta is None else delta
    bad = []
    for i in range(c.shape[0]):
        for j in range(c.shape[1]):
            if i + 1 < c.shape[0] and not c[i + 1, j] <= c[i, j] + delta:
                bad.append(("mu", i, j, c[i, j], c[i + 1, j]))
            if j + 1 < c.shape[1] and not c[i, j + 1] <= c[i, j] + delta:
                bad.append(("lam", i, j, c[i, j], c[i, j + 1]))
    return bad
