"""Global Crouzeix-Raviart velocity space and the Stokes operators.

The raw space is ``P_p(T; R^2)`` with, on each triangle, the barycentric
monomials of :func:`crinfsup.poly.monomial_exponents` for each component.
Raw index of (triangle ``t``, component ``c``, monomial ``k``) is
``(2 t + c) N + k`` with ``N = (p + 1)(p + 2) / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .mesh import Triangulation
from .poly import gauss_legendre, gauss_points, legendre, monomial_exponents, triangle_quadrature

__all__ = [
    "RawSpace",
    "VelocitySpace",
    "OperatorSet",
    "jump_constraints",
    "cr_space",
    "conforming_space",
    "assemble_operators",
    "MAX_VELOCITY_DOFS",
]

MAX_VELOCITY_DOFS = 50_000


def _tabulate(exps, l1, l2):
    """Monomials and their reference derivatives at points, each ``(npts, N)``."""
    l1 = np.asarray(l1)[:, None]
    l2 = np.asarray(l2)[:, None]
    a = np.array([e[0] for e in exps])[None, :]
    b = np.array([e[1] for e in exps])[None, :]
    val = l1**a * l2**b
    d1 = np.where(a > 0, a * l1 ** np.maximum(a - 1, 0) * l2**b, 0.0)
    d2 = np.where(b > 0, b * l1**a * l2 ** np.maximum(b - 1, 0), 0.0)
    return val, d1, d2


@dataclass(frozen=True)
class RawSpace:
    """Per-triangle geometry and indexing of the discontinuous space ``P_p(T; R^2)``."""

    tri: Triangulation
    p: int

    @property
    def exps(self):
        return monomial_exponents(self.p)

    @property
    def N(self) -> int:
        return (self.p + 1) * (self.p + 2) // 2

    @property
    def dim(self) -> int:
        return 2 * self.tri.n_triangles * self.N

    def index(self, t: int, c: int) -> slice:
        start = (2 * t + c) * self.N
        return slice(start, start + self.N)

    def jacobians(self):
        X = self.tri.triangle_coords()
        J = np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]], axis=2)  # columns
        return X[:, 0], J, np.linalg.inv(J), 0.5 * np.abs(np.linalg.det(J))

    def to_ref(self, t: int, x):
        x0, _, Jinv, _ = self.jacobians()
        return (np.asarray(x) - x0[t]) @ Jinv[t].T

    def evaluate(self, coeffs, t: int, x) -> np.ndarray:
        """Vector values ``(npts, 2)`` of raw coefficients on triangle ``t`` at points ``x``."""
        r = self.to_ref(t, np.atleast_2d(x))
        val, _, _ = _tabulate(self.exps, r[:, 0], r[:, 1])
        return np.column_stack([val @ coeffs[self.index(t, 0)], val @ coeffs[self.index(t, 1)]])

    def coefficients_from(self, t: int, ux, uy, out=None) -> np.ndarray:
        """Place a vector polynomial on triangle ``t`` (in the mesh's vertex order)."""
        if out is None:
            out = np.zeros(self.dim)
        out[self.index(t, 0)] = ux.to_coefficients(self.p)
        out[self.index(t, 1)] = uy.to_coefficients(self.p)
        return out


def _edge_rows(raw: RawSpace, kind: str):
    """Per-edge constraint row blocks ``(edge, rows over the raw space)``."""
    tri, p, exps = raw.tri, raw.p, raw.exps
    x0, _, Jinv, _ = raw.jacobians()
    if kind == "moment":
        s_ref, w_ref = gauss_legendre(p + 1)
        s = 0.5 * (s_ref + 1.0)
        W = np.array([0.5 * w_ref * legendre(k, s_ref)[0] * np.sqrt(2 * k + 1) for k in range(p)])
    elif kind == "gauss":
        s = 0.5 * (gauss_points(p) + 1.0)
        W = np.eye(p)
    elif kind == "strong":
        # a degree-p trace vanishing at p + 1 distinct points vanishes identically
        s = 0.5 * (gauss_points(p + 1) + 1.0)
        W = np.eye(p + 1)
    else:
        raise ValueError(f"unknown constraint kind {kind!r}")
    for e, (a, b) in enumerate(tri.edges):
        pts = tri.vertices[a] + s[:, None] * (tri.vertices[b] - tri.vertices[a])
        nr = W.shape[0]
        rows = np.zeros((2 * nr, raw.dim))
        for side, t in enumerate(tri.edge_triangles[e]):
            if t < 0:
                continue
            r = (pts - x0[t]) @ Jinv[t].T
            val, _, _ = _tabulate(exps, r[:, 0], r[:, 1])
            blk = (1.0 if side == 0 else -1.0) * (W @ val)
            for c in range(2):
                rows[c * nr: (c + 1) * nr, raw.index(t, c)] = blk
        yield e, rows


def jump_constraints(tri: Triangulation, p: int, kind: str = "moment") -> np.ndarray:
    """Constraint matrix whose kernel is the Crouzeix-Raviart space.

    ``kind="moment"``: jump (trace on boundary edges) orthogonal to
    ``P_{p-1}(E)`` via normalised Legendre moments; ``"gauss"``: jump zero at
    the ``p`` Gauss points; ``"strong"``: jump identically zero (conforming).
    """
    raw = RawSpace(tri, p)
    return np.vstack([rows for _, rows in _edge_rows(raw, kind)])


@dataclass
class VelocitySpace:
    """Orthonormal basis (columns of ``basis``) of a velocity space in raw coefficients."""

    tri: Triangulation
    p: int
    basis: np.ndarray
    tags: tuple[str, ...]
    kind: str = "full"

    @property
    def raw(self) -> RawSpace:
        return RawSpace(self.tri, self.p)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def tag_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for t in self.tags:
            out[t] = out.get(t, 0) + 1
        return out


def _guard(tri: Triangulation, p: int):
    raw_dim = RawSpace(tri, p).dim
    if raw_dim > MAX_VELOCITY_DOFS:
        raise MemoryError(f"{raw_dim} raw velocity dofs exceed the dense limit of {MAX_VELOCITY_DOFS}")


def cr_space(tri: Triangulation, p: int, constraint: str = "moment",
             rtol: float = linalg.RANK_RTOL) -> VelocitySpace:
    """``CR^p_0(T; R^2)`` as the SVD nullspace of the jump constraints."""
    if p < 1:
        raise ValueError("p must be >= 1")
    _guard(tri, p)
    Z = linalg.nullspace(jump_constraints(tri, p, constraint), rtol)
    return VelocitySpace(tri, p, Z, ("generic-nullspace",) * Z.shape[1], "full")


def conforming_space(tri: Triangulation, p: int, rtol: float = linalg.RANK_RTOL) -> VelocitySpace:
    """Continuous ``P_p`` velocities vanishing on the boundary."""
    _guard(tri, p)
    Z = linalg.nullspace(jump_constraints(tri, p, "strong"), rtol)
    return VelocitySpace(tri, p, Z, ("conforming",) * Z.shape[1], "conforming")


@dataclass
class OperatorSet:
    """``K`` (piecewise H1 Gram), ``Bdiv`` (pressure x velocity), ``Mp`` (pressure mass)."""

    K: np.ndarray
    Bdiv: np.ndarray
    Mp: np.ndarray
    constant: np.ndarray  # pressure coefficients of q = 1
    mean: np.ndarray  # Mp @ constant

    @property
    def n_pressure(self) -> int:
        return self.Mp.shape[0]


def pressure_exponents(p: int):
    return monomial_exponents(p - 1)


def assemble_operators(tri: Triangulation, p: int, space: VelocitySpace,
                       quad_degree: int | None = None) -> OperatorSet:
    """Assemble the Stokes blocks on ``space`` with a ``2p + 2`` quadrature."""
    if space.p != p or space.tri is not tri:
        if space.p != p or not np.array_equal(space.tri.triangles, tri.triangles):
            raise ValueError("velocity space was built for another mesh or degree")
    raw = RawSpace(tri, p)
    rule = triangle_quadrature(quad_degree or 2 * p + 2)
    l1, l2 = rule.ref[:, 0], rule.ref[:, 1]
    val, d1, d2 = _tabulate(raw.exps, l1, l2)
    qexp = pressure_exponents(p)
    qval, _, _ = _tabulate(qexp, l1, l2)
    _, _, Jinv, area = raw.jacobians()
    nt, N, Np = tri.n_triangles, raw.N, len(qexp)
    W = area[:, None] * rule.weights[None, :]  # (nt, Q)
    # Cartesian gradients (nt, Q, N): d/dx = d1 G00 + d2 G10, d/dy = d1 G01 + d2 G11
    gx = d1[None] * Jinv[:, 0, 0, None, None] + d2[None] * Jinv[:, 1, 0, None, None]
    gy = d1[None] * Jinv[:, 0, 1, None, None] + d2[None] * Jinv[:, 1, 1, None, None]
    stiff = np.einsum("tq,tqi,tqj->tij", W, gx, gx) + np.einsum("tq,tqi,tqj->tij", W, gy, gy)
    mass_p = np.einsum("tq,qi,qj->tij", W, qval, qval)
    bx = np.einsum("tq,qi,tqk->tik", W, qval, gx)
    by = np.einsum("tq,qi,tqk->tik", W, qval, gy)

    Z = space.basis.reshape(nt, 2, N, -1)
    KZ = np.einsum("tij,tcjn->tcin", stiff, Z).reshape(raw.dim, -1)
    K = space.basis.T @ KZ
    K = 0.5 * (K + K.T)
    Bdiv = (np.einsum("tik,tkn->tin", bx, Z[:, 0]) + np.einsum("tik,tkn->tin", by, Z[:, 1]))
    Bdiv = Bdiv.reshape(nt * Np, -1)
    Mp = np.zeros((nt * Np, nt * Np))
    for t in range(nt):
        Mp[t * Np:(t + 1) * Np, t * Np:(t + 1) * Np] = mass_p[t]
    const = np.zeros(nt * Np)
    const[::Np] = 1.0  # monomial (0, 0) comes first
    return OperatorSet(K=K, Bdiv=Bdiv, Mp=Mp, constant=const, mean=Mp @ const)
