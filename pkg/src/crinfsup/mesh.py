"""Triangulations, admissibility, vertex patches and patch geometry."""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MeshError",
    "Triangulation",
    "AdmissibilityReport",
    "VertexPatch",
    "PatchGeometry",
    "build_triangulation",
    "check_admissible",
    "extract_patch",
    "patch_geometry",
    "random_patch",
    "regular_patch",
    "refine_uniform",
    "triangle_angles",
    "edge_normal",
    "read_mesh",
    "write_mesh",
    "crisscross_square",
    "lshape_crisscross",
    "disk_delaunay",
    "hexagon_mesh",
    "SEED_MESHES",
]

DEGENERACY = 1e-14
RANDOM_PATCH_RETRIES = 100


class MeshError(ValueError):
    pass


def _signed_area(p0, p1, p2):
    return 0.5 * ((p1[..., 0] - p0[..., 0]) * (p2[..., 1] - p0[..., 1])
                  - (p1[..., 1] - p0[..., 1]) * (p2[..., 0] - p0[..., 0]))


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


def triangle_angles(verts) -> np.ndarray:
    """Interior angles at the three vertices of each triangle, shape ``(..., 3)``."""
    v = np.asarray(verts, dtype=float)
    out = []
    for i in range(3):
        a = v[..., (i + 1) % 3, :] - v[..., i, :]
        b = v[..., (i + 2) % 3, :] - v[..., i, :]
        cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
        dot = (a * b).sum(-1)
        out.append(np.arctan2(np.abs(cross), dot))
    return np.stack(out, axis=-1)


@dataclass(frozen=True)
class Triangulation:
    """A regular triangulation with counterclockwise triangles.

    ``edges[e] = (a, b)`` with ``a < b``; ``edge_triangles[e]`` lists the one
    or two adjacent triangles (``-1`` pads boundary edges) and
    ``triangle_edges[t, i]`` is the edge opposite local vertex ``i``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_triangles: np.ndarray
    triangle_edges: np.ndarray
    boundary_edge: np.ndarray
    interior_vertices: np.ndarray

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def triangle_coords(self, t: int | None = None) -> np.ndarray:
        if t is None:
            return self.vertices[self.triangles]
        return self.vertices[self.triangles[t]]

    def areas(self) -> np.ndarray:
        c = self.triangle_coords()
        return _signed_area(c[:, 0], c[:, 1], c[:, 2])

    def min_angle(self) -> float:
        return float(triangle_angles(self.triangle_coords()).min())

    def h_max(self) -> float:
        c = self.vertices[self.edges]
        return float(np.linalg.norm(c[:, 1] - c[:, 0], axis=1).max())

    def is_interior_vertex(self, v: int) -> bool:
        return bool(np.isin(v, self.interior_vertices))

    def transformed(self, matrix=None, shift=(0.0, 0.0)) -> "Triangulation":
        """Image under ``x -> matrix @ x + shift`` (orientation-preserving)."""
        A = np.eye(2) if matrix is None else np.asarray(matrix, float)
        return build_triangulation(self.vertices @ A.T + np.asarray(shift), self.triangles)

    def to_json(self) -> dict:
        return {"vertices": self.vertices.tolist(), "triangles": self.triangles.tolist()}


def build_triangulation(vertices, triangles) -> Triangulation:
    """Validate a triangle list and derive edge adjacency and boundary flags."""
    V = np.asarray(vertices, dtype=float)
    T = np.array(triangles, dtype=np.int64)
    if V.ndim != 2 or V.shape[1] != 2:
        raise MeshError("vertices must have shape (n, 2)")
    if T.ndim != 2 or T.shape[1] != 3 or len(T) == 0:
        raise MeshError("triangles must have shape (t, 3) with t >= 1")
    if T.min() < 0 or T.max() >= len(V):
        raise MeshError("triangle vertex index out of range")
    if np.any(T[:, 0] == T[:, 1]) or np.any(T[:, 1] == T[:, 2]) or np.any(T[:, 0] == T[:, 2]):
        raise MeshError("triangle with repeated vertex")
    keys = np.sort(T, axis=1)
    if len(np.unique(keys, axis=0)) != len(T):
        raise MeshError("duplicate triangles")
    if len(np.unique(T)) != len(V):
        raise MeshError("vertex not used by any triangle")

    lo, hi = V.min(axis=0), V.max(axis=0)
    scale2 = float(np.sum((hi - lo) ** 2))
    area = _signed_area(V[T[:, 0]], V[T[:, 1]], V[T[:, 2]])
    if np.any(np.abs(area) < DEGENERACY * scale2):
        bad = int(np.argmin(np.abs(area)))
        raise MeshError(f"degenerate triangle {bad} (area {area[bad]:.3e})")
    cw = area < 0
    T[cw] = T[cw][:, [0, 2, 1]]

    edge_index: dict[tuple[int, int], int] = {}
    edge_tris: list[list[int]] = []
    tri_edges = np.empty((len(T), 3), dtype=np.int64)
    for t, (a, b, c) in enumerate(T):
        for i, (u, v) in enumerate(((b, c), (c, a), (a, b))):
            key = (u, v) if u < v else (v, u)
            e = edge_index.get(key)
            if e is None:
                e = edge_index[key] = len(edge_tris)
                edge_tris.append([])
            edge_tris[e].append(t)
            tri_edges[t, i] = e
    if any(len(ts) > 2 for ts in edge_tris):
        raise MeshError("non-manifold edge shared by more than two triangles")
    edges = np.array(list(edge_index.keys()), dtype=np.int64)
    et = np.full((len(edges), 2), -1, dtype=np.int64)
    for e, ts in enumerate(edge_tris):
        et[e, : len(ts)] = ts
    boundary = et[:, 1] < 0

    # a hanging vertex lies strictly inside some edge that then has only one neighbour
    tol = 1e-12 * math.sqrt(scale2)
    for e in np.flatnonzero(boundary):
        a, b = V[edges[e, 0]], V[edges[e, 1]]
        d = b - a
        L2 = d @ d
        s = (V - a) @ d / L2
        dist = np.abs((V[:, 0] - a[0]) * d[1] - (V[:, 1] - a[1]) * d[0]) / math.sqrt(L2)
        inside = (s > 1e-12) & (s < 1 - 1e-12) & (dist < tol)
        if np.any(inside):
            raise MeshError(f"hanging vertex {int(np.flatnonzero(inside)[0])} on edge {tuple(edges[e])}")

    on_boundary = np.zeros(len(V), dtype=bool)
    on_boundary[edges[boundary].ravel()] = True
    return Triangulation(
        vertices=_frozen(V),
        triangles=_frozen(T),
        edges=_frozen(edges),
        edge_triangles=_frozen(et),
        triangle_edges=_frozen(tri_edges),
        boundary_edge=_frozen(boundary),
        interior_vertices=_frozen(np.flatnonzero(~on_boundary)),
    )


# ---------------------------------------------------------------------------
# admissibility


@dataclass(frozen=True)
class AdmissibilityReport:
    has_interior_vertex: bool
    min_angle: float
    connectivity_M: int | None
    admissible: bool
    eps: float
    M: int

    def to_json(self) -> dict:
        return {
            "has_interior_vertex": self.has_interior_vertex,
            "min_angle": self.min_angle,
            "min_angle_deg": math.degrees(self.min_angle),
            "connectivity_M": self.connectivity_M,
            "admissible": self.admissible,
            "eps": self.eps,
            "M": self.M,
        }


def _triangle_distances(tri: Triangulation) -> np.ndarray:
    """Edge-path distance of every triangle to one owning an interior vertex."""
    owns = np.isin(tri.triangles, tri.interior_vertices).any(axis=1)
    dist = np.full(tri.n_triangles, -1, dtype=np.int64)
    queue = deque(np.flatnonzero(owns).tolist())
    dist[owns] = 0
    while queue:
        t = queue.popleft()
        for e in tri.triangle_edges[t]:
            for s in tri.edge_triangles[e]:
                if s >= 0 and dist[s] < 0:
                    dist[s] = dist[t] + 1
                    queue.append(s)
    return dist


def check_admissible(tri: Triangulation, eps: float, M: int) -> AdmissibilityReport:
    """Report on the admissibility class for angle bound ``eps`` (radians)."""
    has_interior = len(tri.interior_vertices) > 0
    min_angle = tri.min_angle()
    conn = None
    if has_interior:
        dist = _triangle_distances(tri)
        conn = int(dist.max()) if np.all(dist >= 0) else None
    admissible = has_interior and min_angle >= eps and conn is not None and conn <= M
    return AdmissibilityReport(has_interior, min_angle, conn, bool(admissible), float(eps), int(M))


# ---------------------------------------------------------------------------
# vertex patches


@dataclass(frozen=True)
class VertexPatch:
    """Fan of ``m`` triangles ``T[j] = (z, P[j], P[j+1])`` around an interior vertex.

    Indices are 0-based and cyclic: edge ``E[j] = conv{z, P[j]}`` is shared by
    ``T[j-1]`` and ``T[j]``.
    """

    center: np.ndarray
    ring: np.ndarray
    center_index: int | None = None
    ring_indices: tuple[int, ...] | None = None
    triangle_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(np.asarray(self.center, float).reshape(2)))
        object.__setattr__(self, "ring", _frozen(np.asarray(self.ring, float).reshape(-1, 2)))
        if len(self.ring) < 3:
            raise MeshError("a vertex patch needs at least three triangles")

    @property
    def m(self) -> int:
        return len(self.ring)

    def triangle(self, j: int) -> np.ndarray:
        m = self.m
        return np.array([self.center, self.ring[j % m], self.ring[(j + 1) % m]])

    def triangles(self) -> np.ndarray:
        return np.array([self.triangle(j) for j in range(self.m)])

    def tangent(self, j: int) -> np.ndarray:
        """``t(j) = (z - P[j]) / |E[j]|``."""
        d = self.center - self.ring[j % self.m]
        return d / np.linalg.norm(d)

    def normal(self, j: int) -> np.ndarray:
        """Unit normal of ``E[j]`` pointing into ``T[j]``."""
        return edge_normal(self.center, self.ring[j % self.m])

    def transformed(self, matrix=None, shift=(0.0, 0.0)) -> "VertexPatch":
        A = np.eye(2) if matrix is None else np.asarray(matrix, float)
        s = np.asarray(shift, float)
        return VertexPatch(A @ self.center + s, self.ring @ A.T + s,
                           self.center_index, self.ring_indices, self.triangle_indices)

    def to_triangulation(self) -> Triangulation:
        verts = np.vstack([self.center, self.ring])
        m = self.m
        tris = [(0, 1 + j, 1 + (j + 1) % m) for j in range(m)]
        return build_triangulation(verts, tris)


def edge_normal(z, P) -> np.ndarray:
    """Counterclockwise rotation of ``(P - z)/|P - z|``.

    For the patch edge ``E[j] = conv{z, P[j]}`` this points into ``T[j]``.
    """
    d = np.asarray(P, float) - np.asarray(z, float)
    d = d / np.linalg.norm(d)
    return np.array([-d[1], d[0]])


def extract_patch(tri: Triangulation, z: int) -> VertexPatch:
    """Ordered counterclockwise fan around interior vertex ``z``."""
    if not 0 <= z < tri.n_vertices:
        raise MeshError(f"vertex {z} out of range")
    if not tri.is_interior_vertex(z):
        raise MeshError(f"vertex {z} is not interior")
    fan: dict[int, tuple[int, int]] = {}
    for t in np.flatnonzero((tri.triangles == z).any(axis=1)):
        row = list(tri.triangles[t])
        k = row.index(z)
        a, b = row[(k + 1) % 3], row[(k + 2) % 3]
        if a in fan:
            raise MeshError(f"patch of vertex {z} is not a simple fan")
        fan[a] = (b, int(t))
    start = min(fan)
    ring, tris = [start], []
    cur = start
    for _ in range(len(fan)):
        nxt, t = fan[cur]
        tris.append(t)
        if nxt == start:
            break
        ring.append(nxt)
        cur = nxt
    if len(tris) != len(fan) or fan[ring[-1]][0] != start:
        raise MeshError(f"patch of vertex {z} does not close")
    return VertexPatch(tri.vertices[z], tri.vertices[ring], int(z), tuple(int(r) for r in ring),
                       tuple(tris))


@dataclass(frozen=True)
class PatchGeometry:
    """Angles, lengths and cotangent quantities of a vertex patch (0-based, cyclic).

    ``omega[j], alpha[j], beta[j]`` are the angles of ``T[j]`` at ``z``,
    ``P[j]`` and ``P[j+1]``; ``gamma_minus[j]`` and ``gamma_plus[j]`` belong to
    edge ``E[j]`` and its neighbours ``T[j-1]``, ``T[j]``.
    """

    m: int
    omega: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    edge_length: np.ndarray
    area: np.ndarray
    gamma_minus: np.ndarray
    gamma_plus: np.ndarray
    gamma: np.ndarray
    kappa: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    sigma: int
    cot_mismatch: float = field(default=0.0)

    @property
    def min_angle(self) -> float:
        return float(min(self.omega.min(), self.alpha.min(), self.beta.min()))


def patch_geometry(patch: VertexPatch) -> PatchGeometry:
    m = patch.m
    tris = patch.triangles()
    area = _signed_area(tris[:, 0], tris[:, 1], tris[:, 2])
    scale = float(np.max(np.linalg.norm(patch.ring - patch.center, axis=1)))
    if np.any(area < DEGENERACY * scale**2):
        raise MeshError("numerically degenerate (or clockwise) triangle in patch")
    ang = triangle_angles(tris)
    omega, alpha, beta = ang[:, 0], ang[:, 1], ang[:, 2]
    E = np.linalg.norm(patch.ring - patch.center, axis=1)
    prev = np.roll(np.arange(m), 1)  # j-1
    g_minus = E**2 / (2 * area[prev])
    g_plus = E**2 / (2 * area)
    cot = lambda x: np.cos(x) / np.sin(x)  # noqa: E731
    g_minus_cot = cot(omega[prev]) + cot(beta[prev])
    g_plus_cot = cot(omega) + cot(alpha)
    mismatch = float(max(np.max(np.abs(g_minus - g_minus_cot) / np.abs(g_minus)),
                         np.max(np.abs(g_plus - g_plus_cot) / np.abs(g_plus))))
    kappa = cot(alpha) + cot(beta[prev])
    mu = cot(omega[prev]) + cot(omega)
    gamma = g_minus + g_plus
    return PatchGeometry(
        m=m, omega=omega, alpha=alpha, beta=beta, edge_length=E, area=area,
        gamma_minus=g_minus, gamma_plus=g_plus, gamma=gamma, kappa=kappa, mu=mu,
        lam=g_minus / gamma, sigma=int(m % 2 == 0), cot_mismatch=mismatch,
    )


def regular_patch(m: int, radius: float = 1.0) -> VertexPatch:
    """Regular ``m``-gon fan; ``m = 6`` with unit radius is the equilateral hexagon."""
    th = 2 * np.pi * np.arange(m) / m
    return VertexPatch(np.zeros(2), radius * np.column_stack([np.cos(th), np.sin(th)]))


def _ratio_bound(omega, eps):
    # |P[j+1]-z| / |P[j]-z| keeps both base angles >= eps iff it lies in [r, 1/r]
    return np.sin(eps) / np.sin(omega + eps)


def random_patch(m: int, min_angle: float, seed: int, *, sweeps: int = 4) -> VertexPatch:
    """Random fan with every triangle angle ``>= min_angle`` (radians).

    Angles at ``z`` are a Dirichlet renormalisation above the floor; edge
    lengths in ``[0.5, 2]`` are drawn by coordinate sweeps inside the exact
    feasible ratio intervals, so the angle bound holds by construction.
    """
    if m < 3:
        raise MeshError("m must be at least 3")
    eps = float(min_angle)
    hi = np.pi - 2 * eps
    if eps <= 0 or m * eps > 2 * np.pi or m * hi < 2 * np.pi or hi < eps:
        raise MeshError(f"infeasible patch request: m={m}, min_angle={math.degrees(eps):.3f} deg")
    rng = np.random.default_rng(seed)
    eps_in = eps * (1 + 1e-9)
    for _ in range(RANDOM_PATCH_RETRIES):
        w = rng.dirichlet(np.full(m, 2.0))
        omega = eps_in + (2 * np.pi - m * eps_in) * w
        if np.all(omega <= np.pi - 2 * eps_in):
            break
    else:
        raise MeshError(f"infeasible patch request after {RANDOM_PATCH_RETRIES} retries")
    rb = _ratio_bound(omega, eps_in)  # rb[j] bounds r[j+1]/r[j]
    logr = np.zeros(m)
    lo_len, hi_len = math.log(0.5), math.log(2.0)
    for _ in range(sweeps):
        for j in range(m):
            jp, jm = (j + 1) % m, (j - 1) % m
            lo = max(lo_len, logr[jm] + math.log(rb[jm]), logr[jp] + math.log(rb[j]))
            up = min(hi_len, logr[jm] - math.log(rb[jm]), logr[jp] - math.log(rb[j]))
            if up > lo:
                logr[j] = rng.uniform(lo, up)
    theta = rng.uniform(0, 2 * np.pi) + np.concatenate([[0.0], np.cumsum(omega[:-1])])
    r = np.exp(logr)
    center = rng.uniform(-1, 1, size=2)
    ring = center + r[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
    return VertexPatch(center, ring)


# ---------------------------------------------------------------------------
# refinement, IO and seed meshes


def refine_uniform(tri: Triangulation) -> Triangulation:
    """Red refinement: four similar children per triangle via edge midpoints."""
    nv = tri.n_vertices
    mids = 0.5 * (tri.vertices[tri.edges[:, 0]] + tri.vertices[tri.edges[:, 1]])
    verts = np.vstack([tri.vertices, mids])
    te = tri.triangle_edges + nv  # midpoint opposite local vertex i
    a, b, c = tri.triangles.T
    m_bc, m_ca, m_ab = te[:, 0], te[:, 1], te[:, 2]
    children = np.concatenate([
        np.column_stack([a, m_ab, m_ca]),
        np.column_stack([m_ab, b, m_bc]),
        np.column_stack([m_ca, m_bc, c]),
        np.column_stack([m_ab, m_bc, m_ca]),
    ])
    return build_triangulation(verts, children)


def read_mesh(path) -> Triangulation:
    data = json.loads(Path(path).read_text())
    return build_triangulation(data["vertices"], data["triangles"])


def write_mesh(tri: Triangulation, path) -> None:
    Path(path).write_text(json.dumps(tri.to_json()))


def crisscross_square() -> Triangulation:
    """Unit square split by both diagonals (one interior vertex)."""
    V = [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)]
    return build_triangulation(V, [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)])


def lshape_crisscross() -> Triangulation:
    """L-shaped domain ``(0,2)^2 minus [1,2]x[1,2]`` of three criss-cross cells."""
    V, T = [], []
    index: dict[tuple[float, float], int] = {}

    def vid(p):
        if p not in index:
            index[p] = len(V)
            V.append(p)
        return index[p]

    for x0, y0 in ((0, 0), (1, 0), (0, 1)):
        c = vid((x0 + 0.5, y0 + 0.5))
        corners = [vid((x0, y0)), vid((x0 + 1, y0)), vid((x0 + 1, y0 + 1)), vid((x0, y0 + 1))]
        for k in range(4):
            T.append((corners[k], corners[(k + 1) % 4], c))
    return build_triangulation(V, T)


def disk_delaunay(n_boundary: int = 12) -> Triangulation:
    """Delaunay triangulation of the inscribed polygon of the unit disk.

    Interior points: the centre and a rotated half-radius ring of ``n/2``.
    """
    from scipy.spatial import Delaunay

    th = 2 * np.pi * np.arange(n_boundary) / n_boundary
    k = n_boundary // 2
    ti = 2 * np.pi * (np.arange(k) + 0.5) / k
    pts = np.vstack([
        np.column_stack([np.cos(th), np.sin(th)]),
        0.5 * np.column_stack([np.cos(ti), np.sin(ti)]),
        [[0.0, 0.0]],
    ])
    return build_triangulation(pts, Delaunay(pts).simplices)


def hexagon_mesh() -> Triangulation:
    """Equilateral hexagon with its centre (six unit triangles)."""
    return regular_patch(6).to_triangulation()


SEED_MESHES = {
    "crisscross": crisscross_square,
    "lshape": lshape_crisscross,
    "disk": disk_delaunay,
    "hexagon": hexagon_mesh,
}
