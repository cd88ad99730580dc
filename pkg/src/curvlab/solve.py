"""Damped Newton iteration and spectral classification of critical points."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import eigsh, splu

from .model import Divergence, EnergyModel

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
BACKTRACK = 0.5
REGULARIZATION = 1e-10
#: problems up to this size are handled by a dense generalized eigensolver
DENSE_LIMIT = 800


class NoConvergence(RuntimeError):
    """Iteration limit reached or line search stalled.

    ``best`` holds the iterate with the smallest gradient norm and
    ``history`` the gradient norms per iteration.
    """

    def __init__(self, message, best=None, history=None):
        super().__init__(message)
        self.best = best
        self.history = list(history or [])


class LinearSolveFailure(RuntimeError):
    """Hessian singular even after regularization."""


class EigenSolveFailure(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralCertificate:
    """Smallest eigenpairs of ``H m = sigma B m`` with ``B = S + M``.

    ``sigmas`` are sorted ascending; ``eigenfield`` belongs to
    ``sigma_min`` and is B-normalized.
    """

    sigma_min: float
    eigenfield: np.ndarray
    negative_count: int
    sigmas: np.ndarray
    residual: float

    @property
    def kind(self) -> str:
        return classify(self.sigma_min)


@dataclass(frozen=True, eq=False)
class CriticalPoint:
    u: np.ndarray
    energy: float
    grad_norm: float
    kind: str
    min_eigenvalue: float
    gb_residual: float
    iterations: int
    certificate: SpectralCertificate | None = field(default=None, repr=False)
    history: tuple = field(default=(), repr=False)
    mu: float = 0.0
    lam: float = 0.0

    @property
    def negative_count(self) -> int:
        return 0 if self.certificate is None else self.certificate.negative_count


def classify(sigma: float, tol: float = 1e-10) -> str:
    if sigma > tol:
        return "minimizer"
    if sigma < -tol:
        return "saddle"
    return "unknown"


def _solve(H, rhs, B):
    for attempt in range(2):
        try:
            with np.errstate(all="raise"):
                x = splu(H.tocsc()).solve(rhs)
            if np.isfinite(x).all():
                return x
        except (RuntimeError, FloatingPointError):
            pass
        if attempt == 0:
            logger.debug("singular Hessian, regularizing once")
            H = H + REGULARIZATION * B
    raise LinearSolveFailure("Hessian is singular after regularization")


def newton(
    model: EnergyModel,
    u_init,
    tol: float = 1e-10,
    max_iter: int = 60,
    certify: bool = True,
    k_eigen: int = 3,
) -> CriticalPoint:
    """Damped Newton iteration for ``grad I(u) = 0``.

    The step is backtracked by halves until the Armijo condition on the
    merit ``|grad I|^2`` holds.  Convergence is declared when the Euclidean
    norm of the nodal gradient drops below ``tol``.

    Raises
    ------
    NoConvergence
        After ``max_iter`` iterations or a stalled line search; carries the
        best iterate.
    LinearSolveFailure
        If the Hessian cannot be factorized even after regularization.
    """
    u = np.array(u_init, dtype=float)
    B = model.ops.gram
    g = model.gradient(u)
    gn = float(np.linalg.norm(g))
    history = [gn]
    it = 0
    while gn >= tol:
        if it >= max_iter:
            raise NoConvergence(
                f"no convergence after {max_iter} iterations, |grad| = {gn:.3e}",
                best=u,
                history=history,
            )
        step = _solve(model.hessian(u), -g, B)
        t = 1.0
        merit = gn * gn
        while True:
            trial = u + t * step
            try:
                gt = model.gradient(trial)
                gtn = float(np.linalg.norm(gt))
            except Divergence:
                gtn = np.inf
            if gtn * gtn <= (1.0 - 2.0 * ARMIJO * t) * merit:
                break
            t *= BACKTRACK
            if t < 1e-12:
                # at roundoff level a full step can miss the Armijo bar
                if gn < 1e3 * tol and gtn < 10 * gn:
                    break
                raise NoConvergence(
                    f"line search stalled at |grad| = {gn:.3e}", best=u, history=history
                )
        u, g, gn = trial, gt, gtn
        history.append(gn)
        it += 1
    return _finish(model, u, gn, it, history, certify, k_eigen)


def _finish(model, u, gn, it, history, certify, k_eigen):
    cert = min_eigen(model, u, k=k_eigen) if certify else None
    sigma = cert.sigma_min if cert is not None else float("nan")
    return CriticalPoint(
        u=u,
        energy=model.energy(u),
        grad_norm=gn,
        kind=classify(sigma) if cert is not None else "unknown",
        min_eigenvalue=sigma,
        gb_residual=model.curvature_integrals(u)[2],
        iterations=it,
        certificate=cert,
        history=tuple(history),
        mu=model.mu,
        lam=model.lam,
    )


def certify_point(model: EnergyModel, u, k: int = 3) -> CriticalPoint:
    """Wrap a converged field with energy and spectral data."""
    gn = float(np.linalg.norm(model.gradient(u)))
    return _finish(model, np.asarray(u, dtype=float), gn, 0, [gn], True, k)


def min_eigen(model: EnergyModel, u, k: int = 3, seed: int = 0) -> SpectralCertificate:
    """Smallest ``k`` eigenvalues of the pencil ``(H(u), S + M)``.

    The shift sits strictly below a provable lower bound of the spectrum, so
    shift-and-invert returns the bottom of the spectrum.  ``residual`` is the
    normwise backward error ``|Hm - sigma Bm| / (|Hm| + |sigma| |Bm|)``.  With
    ``D = H - S`` diagonal, ``m.H m >= min(1, min D/M) m.B m``.
    """
    ops = model.ops
    D = model.hessian_diagonal(u)
    H = (ops.stiffness + sparse.diags(D)).tocsr()
    B = ops.gram
    nv = model.size
    k = max(1, min(int(k), nv - 2))
    if nv <= DENSE_LIMIT:
        w, V = scipy.linalg.eigh(H.toarray(), B.toarray(), subset_by_index=[0, k - 1])
    else:
        lb = min(1.0, float(np.min(D / ops.mass)))
        # any shift below lb keeps H - shift*B definite; a close one keeps
        # ARPACK fast when the bottom of the spectrum is clustered
        shift = lb - 1e-3 * max(1.0, abs(lb))
        v0 = np.random.default_rng(seed).standard_normal(nv)
        try:
            w, V = eigsh(H, k=k, M=B, sigma=shift, which="LM", v0=v0, tol=1e-12)
        except Exception as exc:  # ARPACK reports several exception types
            raise EigenSolveFailure(f"shift-invert eigensolve failed: {exc}") from exc
        order = np.argsort(w)
        w, V = w[order], V[:, order]
    m = V[:, 0]
    m = m / np.sqrt(m @ (B @ m))
    # fix the sign for reproducibility
    if m[np.argmax(np.abs(m))] < 0:
        m = -m
    Bm = B @ m
    Hm = H @ m
    # backward error, insensitive to the size of e^{2u} at a spike
    res = float(np.linalg.norm(Hm - w[0] * Bm) / (np.linalg.norm(Hm) + abs(w[0]) * np.linalg.norm(Bm)))
    if res > 1e-8:
        raise EigenSolveFailure(f"eigen-residual {res:.2e} above 1e-8")
    return SpectralCertificate(
        sigma_min=float(w[0]),
        eigenfield=m,
        negative_count=int(np.sum(w < 0)),
        sigmas=np.asarray(w, dtype=float),
        residual=res,
    )


def solve_base(model: EnergyModel, tol: float = 1e-10, u_init=None) -> CriticalPoint:
    """Unique solution with both perturbations switched off."""
    base = model.with_params(0.0, 0.0)
    start = np.zeros(model.size) if u_init is None else u_init
    return newton(base, start, tol=tol)


def solve_minimizer_pair(
    model: EnergyModel, u0: CriticalPoint | None = None, tol: float = 1e-10, steps: int = 1
) -> CriticalPoint:
    """Strict local minimizer of the perturbed energy, continued from ``u0``.

    ``u0`` is the solution at ``mu = lam = 0``; it is computed when not
    given.  ``steps`` > 1 ramps the parameters linearly.

    Raises
    ------
    NoConvergence
        If Newton fails or the limit is not certified as a minimizer, which
        is the expected outcome once the parameters are large.
    """
    if u0 is None:
        u0 = solve_base(model, tol=tol)
    if model.mu == 0.0 and model.lam == 0.0:
        return u0
    u = u0.u
    for j in range(1, steps + 1):
        t = j / steps
        cp = newton(model.with_params(t * model.mu, t * model.lam), u, tol=tol, certify=(j == steps))
        u = cp.u
    if cp.kind != "minimizer":
        raise NoConvergence(
            f"continued solution is not a strict minimizer (sigma_min = {cp.min_eigenvalue:.3e})",
            best=cp.u,
        )
    return cp
