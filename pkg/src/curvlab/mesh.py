"""Flat unit torus with a round hole, and its discrete operators.

The model surface is the periodic square ``[0, 1)^2`` with the open disk of
radius ``rho`` about ``(1/2, 1/2)`` removed.  It has one boundary circle and
Euler characteristic -1.  Vertices live in the fundamental square; edges that
cross a side of the square are resolved with the minimum-image convention,
which is unambiguous because every edge is shorter than half the period.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

logger = logging.getLogger(__name__)

HOLE_CENTER = (0.5, 0.5)


class MeshError(ValueError):
    """Raised when the requested mesh cannot be built or fails validation."""


class DegenerateTriangleError(MeshError):
    """Snapping produced a triangle below the area or angle floor."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulated one-holed torus.

    Attributes
    ----------
    vertices : (V, 2) ndarray
        Positions in the fundamental square ``[0, 1)^2``.
    triangles : (F, 3) ndarray of int
        Positively oriented index triples.
    boundary_loop : (B,) ndarray of int
        Boundary vertices in cyclic order, with the surface on the left
        (clockwise around the hole).
    hole_center : (2,) ndarray
    hole_radius : float
    n : int
        Grid resolution per side.
    snapped : (V,) ndarray of bool
        Vertices projected radially onto the hole circle.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loop: np.ndarray
    hole_center: np.ndarray
    hole_radius: float
    n: int
    snapped: np.ndarray
    grid_index: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def is_boundary(self) -> np.ndarray:
        flag = np.zeros(self.n_vertices, dtype=bool)
        flag[self.boundary_loop] = True
        return flag

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + len(self.triangles)

    def triangle_coords(self) -> np.ndarray:
        """(F, 3, 2) unwrapped corner coordinates, anchored at the first corner."""
        p = self.vertices[self.triangles]
        d = p - p[:, :1, :]
        d -= np.round(d)
        return p[:, :1, :] + d

    def displacement(self, origin, idx=None) -> np.ndarray:
        """Minimum-image vectors from ``origin`` to vertices ``idx`` (all by default)."""
        pts = self.vertices if idx is None else self.vertices[idx]
        d = pts - np.asarray(origin, dtype=float)
        return d - np.round(d)

    def boundary_edges(self) -> np.ndarray:
        loop = self.boundary_loop
        return np.column_stack([loop, np.roll(loop, -1)])


def _corner_angles(coords: np.ndarray) -> np.ndarray:
    """(F, 3) interior angles at each corner of unwrapped triangles."""
    out = np.empty(coords.shape[:2])
    for k in range(3):
        u = coords[:, (k + 1) % 3] - coords[:, k]
        v = coords[:, (k + 2) % 3] - coords[:, k]
        cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        out[:, k] = np.arctan2(np.abs(cross), np.einsum("ij,ij->i", u, v))
    return out


def _signed_areas(coords: np.ndarray) -> np.ndarray:
    u = coords[:, 1] - coords[:, 0]
    v = coords[:, 2] - coords[:, 0]
    return 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])


def triangle_quality(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Signed areas ``(F,)`` and corner angles ``(F, 3)`` in radians."""
    coords = mesh.triangle_coords()
    return _signed_areas(coords), _corner_angles(coords)


def build_torus_with_hole(n: int, rho: float, min_angle: float = 20.0) -> Mesh:
    """Structured triangulation of the flat torus minus a disk.

    Parameters
    ----------
    n : int
        Grid cells per side, at least 16.
    rho : float
        Hole radius in ``(0, 0.45)``.
    min_angle : float
        Quality floor in degrees; a mesh violating it is rejected.

    Notes
    -----
    Vertices within half a cell of the circle are projected radially onto
    it.  A triangle is dropped when one of its corners lies deeper inside
    the disk or when all three corners sit on the circle.  Each grid square
    picks the diagonal whose surviving triangles have the larger minimum
    angle, except that a diagonal never joins a vertex inside the disk to
    one beyond the snapping band, so the boundary is an inscribed polygon.
    """
    if int(n) != n or n < 16:
        raise MeshError(f"grid resolution must be an integer >= 16, got {n}")
    if not 0.0 < rho < 0.45:
        raise MeshError(f"hole radius must lie in (0, 0.45), got {rho}")
    n = int(n)
    h = 1.0 / n
    center = np.array(HOLE_CENTER)
    # boundary must pick up enough vertices to resolve the circle
    if 2 * math.pi * rho / h < 8:
        raise MeshError(f"hole radius {rho} too small for n={n}")

    jj, ii = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    pts = np.column_stack([ii.ravel() * h, jj.ravel() * h])
    d = pts - center
    r = np.hypot(d[:, 0], d[:, 1])
    snap = np.abs(r - rho) < 0.5 * h
    pts[snap] = center + rho * d[snap] / r[snap, None]
    inside = r < rho - 0.5 * h
    outside = r > rho + 0.5 * h

    def gid(i, j):
        return (j % n) * n + (i % n)

    i0, j0 = ii.ravel(), jj.ravel()
    a, b = gid(i0, j0), gid(i0 + 1, j0)
    c, dd = gid(i0 + 1, j0 + 1), gid(i0, j0 + 1)
    # two splits per square: along a-c or along b-d
    cand = np.stack(
        [
            np.column_stack([a, b, c]),
            np.column_stack([a, c, dd]),
            np.column_stack([a, b, dd]),
            np.column_stack([b, c, dd]),
        ],
        axis=1,
    )  # (n*n, 4, 3)
    flat = cand.reshape(-1, 3)
    p = pts[flat]
    rel = p - p[:, :1, :]
    rel -= np.round(rel)
    coords = p[:, :1, :] + rel
    # a triangle survives if it touches the outer band and has no corner
    # inside; triangles with every corner on the circle lie in the disk
    keep = ~inside[flat].any(axis=1) & outside[flat].any(axis=1)
    minang = _corner_angles(coords).min(axis=1)
    minang = np.where(keep, minang, np.pi).reshape(-1, 4)
    keep = keep.reshape(-1, 4)
    q_ac = minang[:, :2].min(axis=1)
    q_bd = minang[:, 2:].min(axis=1)

    def crosses(u, v):
        return (inside[u] & outside[v]) | (outside[u] & inside[v])

    # a diagonal joining the inner and outer bands would leave a staircase
    # on the hole boundary; at most one diagonal of a square can do that
    use_bd = np.where(crosses(a, c), True, np.where(crosses(b, dd), False, q_bd > q_ac + 1e-12))
    chosen = np.where(use_bd[:, None], np.array([2, 3]), np.array([0, 1]))
    rows = np.repeat(np.arange(n * n), 2)
    sel = chosen.ravel()
    tri_ok = keep[rows, sel]
    tris = cand[rows, sel][tri_ok]

    used = np.zeros(n * n, dtype=bool)
    used[tris.ravel()] = True
    # row-major grid vertices first, then snapped ones
    order = np.concatenate([np.flatnonzero(used & ~snap), np.flatnonzero(used & snap)])
    new_index = -np.ones(n * n, dtype=int)
    new_index[order] = np.arange(len(order))
    tris = new_index[tris]
    verts = pts[order]
    snapped = snap[order]

    loop = _trace_boundary(tris, len(verts))
    mesh = Mesh(
        vertices=verts,
        triangles=tris,
        boundary_loop=loop,
        hole_center=center,
        hole_radius=float(rho),
        n=n,
        snapped=snapped,
        grid_index=order,
    )
    validate_mesh(mesh, min_angle=min_angle)
    return mesh


def _trace_boundary(tris: np.ndarray, nv: int) -> np.ndarray:
    directed = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    key = directed[:, 0] * nv + directed[:, 1]
    rkey = directed[:, 1] * nv + directed[:, 0]
    present = np.isin(rkey, key)
    bnd = directed[~present]
    if len(bnd) == 0:
        raise MeshError("mesh has no boundary")
    nxt = {}
    for s, t in bnd:
        if s in nxt:
            raise MeshError(f"boundary vertex {s} is not manifold")
        nxt[int(s)] = int(t)
    start = int(bnd[0, 0])
    loop = [start]
    cur = nxt[start]
    while cur != start:
        loop.append(cur)
        if len(loop) > len(bnd):
            raise MeshError("boundary is not a simple cycle")
        cur = nxt[cur]
    if len(loop) != len(bnd):
        raise MeshError(f"boundary has several components ({len(loop)} of {len(bnd)} edges traced)")
    return np.array(loop, dtype=int)


def validate_mesh(mesh: Mesh, min_angle: float = 20.0, area_floor: float = 1e-3) -> None:
    """Check the topological and geometric invariants, raising on violation.

    ``area_floor`` is relative to the area of a grid half-cell.
    """
    chi = mesh.euler_characteristic()
    if chi != -1:
        raise MeshError(f"Euler characteristic {chi}, expected -1")
    loop = mesh.boundary_loop
    if len(loop) < 3 or len(np.unique(loop)) != len(loop):
        raise MeshError("boundary loop is not a simple cycle")
    areas, angles = triangle_quality(mesh)
    h = mesh.spacing
    if areas.min() <= area_floor * 0.5 * h * h:
        raise DegenerateTriangleError(
            f"triangle area {areas.min():.3e} below floor; raise n or adjust rho"
        )
    worst = math.degrees(angles.min())
    if worst < min_angle:
        raise DegenerateTriangleError(
            f"minimum angle {worst:.2f} deg below floor {min_angle} deg; raise n or adjust rho"
        )
    # every boundary edge must sit in exactly one triangle
    t = mesh.triangles
    und = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    _, counts = np.unique(und, axis=0, return_counts=True)
    if counts.max() > 2:
        raise MeshError("edge shared by more than two triangles")
    if (counts == 1).sum() != len(loop):
        raise MeshError("boundary edge count does not match the boundary loop")
    # no duplicated vertices (identified sides share one copy)
    key = np.round(mesh.vertices % 1.0 * mesh.n * 1e6).astype(np.int64)
    if len(np.unique(key, axis=0)) != mesh.n_vertices:
        raise MeshError("duplicated vertex positions")


# --------------------------------------------------------------------------
# operators


@dataclass(frozen=True, eq=False)
class Operators:
    """Assembled discrete operators.

    ``mass`` and ``boundary_mass`` are the diagonals of the lumped matrices;
    ``boundary_mass`` vanishes at interior vertices.  ``boundary_normals``
    is aligned with ``mesh.boundary_loop``.
    """

    stiffness: sparse.csr_matrix
    mass: np.ndarray
    boundary_mass: np.ndarray
    boundary_normals: np.ndarray
    negative_weights: int = 0

    @property
    def gram(self) -> sparse.csr_matrix:
        """Discrete H1 Gram matrix, stiffness plus lumped mass."""
        return (self.stiffness + sparse.diags(self.mass)).tocsr()


def cotangent_stiffness(coords: np.ndarray, triangles: np.ndarray, nv: int) -> sparse.csr_matrix:
    """Linear-FEM stiffness matrix from per-triangle corner coordinates.

    ``coords`` has shape (F, 3, 2) so that periodic triangles can be passed
    already unwrapped.
    """
    rows, cols, vals = [], [], []
    areas2 = 2.0 * _signed_areas(coords)
    for k in range(3):
        i = triangles[:, (k + 1) % 3]
        j = triangles[:, (k + 2) % 3]
        u = coords[:, (k + 1) % 3] - coords[:, k]
        v = coords[:, (k + 2) % 3] - coords[:, k]
        cot = np.einsum("ij,ij->i", u, v) / areas2
        w = 0.5 * cot
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    S = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nv, nv)
    )
    return S.tocsr()


def assemble_operators(mesh: Mesh) -> Operators:
    coords = mesh.triangle_coords()
    nv = mesh.n_vertices
    S = cotangent_stiffness(coords, mesh.triangles, nv)
    offdiag = S - sparse.diags(S.diagonal())
    n_neg = int((offdiag.data > 1e-14).sum() // 2)
    if n_neg:
        logger.info("%d edges carry negative cotangent weights (non-Delaunay)", n_neg)

    area = _signed_areas(coords)
    mass = np.bincount(mesh.triangles.ravel(), weights=np.repeat(area / 3.0, 3), minlength=nv)

    e = mesh.boundary_edges()
    seg = mesh.displacement(mesh.vertices[e[:, 0]], e[:, 1])
    length = np.hypot(seg[:, 0], seg[:, 1])
    bmass = np.bincount(e.ravel(), weights=np.repeat(0.5 * length, 2), minlength=nv)

    radial = mesh.displacement(mesh.hole_center, mesh.boundary_loop)
    normals = -radial / np.hypot(radial[:, 0], radial[:, 1])[:, None]
    return Operators(
        stiffness=S,
        mass=mass,
        boundary_mass=bmass,
        boundary_normals=normals,
        negative_weights=n_neg,
    )


@dataclass(frozen=True, eq=False)
class BackgroundCurvature:
    """Discrete Gaussian and geodesic curvature of the flat model.

    ``interior_defect`` is ``2*pi - angle sum`` at interior vertices and
    ``boundary_defect`` is ``pi - angle sum`` at boundary vertices (each
    zero elsewhere).  ``K`` and ``kappa`` are the densities obtained by
    dividing by the lumped area and boundary length respectively.
    """

    K: np.ndarray
    kappa: np.ndarray
    interior_defect: np.ndarray
    boundary_defect: np.ndarray

    @property
    def total_defect(self) -> float:
        return float(self.interior_defect.sum() + self.boundary_defect.sum())


def background_curvature(mesh: Mesh, ops: Operators | None = None) -> BackgroundCurvature:
    if ops is None:
        ops = assemble_operators(mesh)
    _, angles = triangle_quality(mesh)
    nv = mesh.n_vertices
    angle_sum = np.bincount(mesh.triangles.ravel(), weights=angles.ravel(), minlength=nv)
    bnd = mesh.is_boundary
    interior_defect = np.where(bnd, 0.0, 2.0 * np.pi - angle_sum)
    boundary_defect = np.where(bnd, np.pi - angle_sum, 0.0)
    K = interior_defect / ops.mass
    kappa = np.zeros(nv)
    kappa[bnd] = boundary_defect[bnd] / ops.boundary_mass[bnd]
    return BackgroundCurvature(
        K=K, kappa=kappa, interior_defect=interior_defect, boundary_defect=boundary_defect
    )


# --------------------------------------------------------------------------
# plain-text serialization


def write_mesh(path, mesh: Mesh) -> None:
    """Write the documented text format.

    Layout: header ``torus-hole n rho``; ``vertices V`` then one line
    ``index x y boundary_flag`` per vertex; ``triangles F`` then
    ``index i j k``; ``boundary B`` then the loop indices, one per line.
    """
    bnd = mesh.is_boundary
    lines = [f"torus-hole {mesh.n} {mesh.hole_radius:.17g}", f"vertices {mesh.n_vertices}"]
    for k, (x, y) in enumerate(mesh.vertices):
        lines.append(f"{k} {x:.17g} {y:.17g} {int(bnd[k])}")
    lines.append(f"triangles {len(mesh.triangles)}")
    for k, (i, j, l) in enumerate(mesh.triangles):
        lines.append(f"{k} {i} {j} {l}")
    lines.append(f"boundary {len(mesh.boundary_loop)}")
    lines.extend(str(int(v)) for v in mesh.boundary_loop)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        tokens = [ln.split() for ln in fh if ln.strip()]
    head = tokens[0]
    if head[0] != "torus-hole":
        raise MeshError(f"unrecognized mesh header {' '.join(head)!r}")
    n, rho = int(head[1]), float(head[2])
    pos = 1
    nv = int(tokens[pos][1])
    vt = np.array(tokens[pos + 1 : pos + 1 + nv], dtype=float)
    pos += 1 + nv
    nf = int(tokens[pos][1])
    tt = np.array(tokens[pos + 1 : pos + 1 + nf], dtype=int)
    pos += 1 + nf
    nb = int(tokens[pos][1])
    loop = np.array([int(t[0]) for t in tokens[pos + 1 : pos + 1 + nb]], dtype=int)
    verts = vt[:, 1:3]
    center = np.array(HOLE_CENTER)
    r = np.hypot(*(verts - center).T)
    snapped = np.isclose(r, rho, rtol=0, atol=1e-12)
    mesh = Mesh(
        vertices=verts,
        triangles=tt[:, 1:4],
        boundary_loop=loop,
        hole_center=center,
        hole_radius=rho,
        n=n,
        snapped=snapped,
        grid_index=-np.ones(nv, dtype=int),
    )
    validate_mesh(mesh, min_angle=0.0)
    return mesh
