"""Constructive right-inverses of the piecewise divergence."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .crspace import RawSpace, VelocitySpace, conforming_space
from .mesh import Triangulation, VertexPatch, edge_normal
from .patchmat import PatchBasis, edge_bubble, lambda_apply, patch_basis
from .poly import (
    PolyOnTriangle,
    divergence,
    gauss_legendre,
    h1_seminorm_sq,
    legendre,
    monomial_exponents,
    triangle_quadrature,
)

__all__ = [
    "SurjectivityFailure",
    "BubbleBasis",
    "bubble_basis",
    "BubbleSolve",
    "bubble_lstsq",
    "bubble_right_inverse",
    "lambda_scaled",
    "project_out_lambda",
    "PatchVelocity",
    "edge_pair_vandermonde",
    "edge_pair_right_inverse",
    "patch_right_inverse",
    "random_patch_velocity",
    "random_pressure",
    "minimal_cr_space",
    "edge_moments",
]

Vec = tuple[PolyOnTriangle, PolyOnTriangle]


class SurjectivityFailure(RuntimeError):
    """A right-inverse left a residual that the theory says cannot occur."""


# ---------------------------------------------------------------------------
# bubbles


@dataclass
class BubbleBasis:
    verts: np.ndarray
    p: int
    funcs: list[Vec]

    @property
    def dim(self) -> int:
        return len(self.funcs)

    def combine(self, coeffs) -> Vec:
        zero = self.funcs[0][0] * 0.0
        ux, uy = zero, zero
        for c, (bx, by) in zip(coeffs, self.funcs):
            ux = ux + c * bx
            uy = uy + c * by
        return ux, uy


def bubble_basis(T, p: int) -> BubbleBasis:
    """``phi_0 phi_1 phi_2 * monomial * e`` for monomials of degree ``<= p - 3``."""
    if p < 3:
        raise ValueError("bubble space is trivial for p < 3")
    verts = np.asarray(T, dtype=float).reshape(3, 2)
    l0 = PolyOnTriangle.barycentric(0, verts)
    cubic = l0 * l0._like(PolyOnTriangle.barycentric(1, verts).coef) \
        * l0._like(PolyOnTriangle.barycentric(2, verts).coef)
    zero = cubic * 0.0
    funcs = []
    for a, b in monomial_exponents(p - 3):
        c = np.zeros((a + b + 1, a + b + 1))
        c[a, b] = 1.0
        f = cubic * cubic._like(c)
        funcs.append((f, zero))
        funcs.append((zero, f))
    return BubbleBasis(verts, p, funcs)


def lambda_scaled(g: PolyOnTriangle) -> np.ndarray:
    """The four functionals scaled to the units of ``||g||_{L2(T)}``."""
    lam = lambda_apply(g)
    r = np.sqrt(g.area)
    return np.concatenate([lam[:3] * r, lam[3:] / r])


def project_out_lambda(g: PolyOnTriangle, d: int) -> PolyOnTriangle:
    """Coefficient-space orthogonal projection of ``g`` onto the kernel of the functionals."""
    n = (d + 1) * (d + 2) // 2
    L = np.array([lambda_apply(PolyOnTriangle.from_coefficients(np.eye(n)[i], d, g.verts))
                  for i in range(n)]).T
    Q = linalg.nullspace(L, 1e-12)
    c = g.to_coefficients(d)
    return PolyOnTriangle.from_coefficients(Q @ (Q.T @ c), d, g.verts)


@dataclass
class BubbleSolve:
    coeffs: np.ndarray
    residual: float  # ||g - div b||_{L2(T)}
    g_norm: float
    basis: BubbleBasis

    @property
    def relative_residual(self) -> float:
        return self.residual / self.g_norm if self.g_norm > 0 else self.residual

    def velocity(self) -> Vec:
        return self.basis.combine(self.coeffs)


def bubble_lstsq(T, p: int, g: PolyOnTriangle, basis: BubbleBasis | None = None) -> BubbleSolve:
    """L2-least-squares fit of ``div b = g`` over the bubbles (no precondition)."""
    basis = basis or bubble_basis(T, p)
    rule = triangle_quadrature(max(2 * (p - 1), 1))
    l1, l2 = rule.ref[:, 0], rule.ref[:, 1]
    w = np.sqrt(rule.weights * g.area)
    cols = [divergence(b).eval_ref(l1, l2) * w for b in basis.funcs]
    rhs = g.eval_ref(l1, l2) * w
    x, res = linalg.lstsq(np.column_stack(cols), rhs)
    return BubbleSolve(x, res, float(np.linalg.norm(rhs)), basis)


def bubble_right_inverse(T, p: int, g: PolyOnTriangle, tol: float = 1e-10) -> BubbleSolve:
    """Bubble ``b`` with ``div b = g``; requires the four functionals of ``g`` to vanish."""
    if g.degree > p - 1:
        raise ValueError(f"g has degree {g.degree} > p - 1 = {p - 1}")
    gn = float(np.sqrt(max((g * g).integrate(), 0.0)))
    lam = lambda_scaled(g)
    if np.linalg.norm(lam) > tol * max(gn, np.finfo(float).tiny):
        raise ValueError(f"g is not a bubble divergence: functionals {lam.tolist()} do not vanish")
    sol = bubble_lstsq(T, p, g)
    if sol.residual > tol * max(gn, np.finfo(float).tiny):
        raise SurjectivityFailure(f"bubble residual {sol.relative_residual:.3e} exceeds {tol}")
    return sol


# ---------------------------------------------------------------------------
# piecewise velocities


@dataclass
class PatchVelocity:
    """Piecewise vector polynomial ``pieces[t] = (ux, uy)`` with its construction data."""

    pieces: dict[int, Vec]
    coeffs: dict[str, object] = field(default_factory=dict)
    residual: float = 0.0  # ||g - div_pw v|| / ||g||
    g_norm: float = 0.0
    info: dict[str, float] = field(default_factory=dict)

    @property
    def seminorm(self) -> float:
        return float(np.sqrt(sum(h1_seminorm_sq(u) for u in self.pieces.values())))

    @property
    def ratio(self) -> float:
        """``|||v|||_pw / ||g||``."""
        return self.seminorm / self.g_norm


def _add(u: Vec | None, v: Vec) -> Vec:
    if u is None:
        return v
    return u[0] + v[0], u[1] + v[1]


def edge_moments(u: Vec, a, b, p: int) -> np.ndarray:
    """Normalised Legendre moments ``int_0^1 u(a + s(b-a)) Le_k(2s-1) ds``, ``k < p``."""
    x, w = gauss_legendre(p + 1)
    s = 0.5 * (x + 1.0)
    pts = np.asarray(a) + s[:, None] * (np.asarray(b) - np.asarray(a))
    vals = np.column_stack([u[0](pts), u[1](pts)])
    W = np.array([0.5 * w * legendre(k, x)[0] * np.sqrt(2 * k + 1) for k in range(p)])
    return W @ vals


def _locate(T, a, b):
    T = np.asarray(T, float)
    ia = int(np.argmin(np.linalg.norm(T - a, axis=1)))
    ib = int(np.argmin(np.linalg.norm(T - b, axis=1)))
    return ia, ib, 3 - ia - ib


def _shared_edge(Tp, Tm):
    scale = max(np.ptp(Tp, axis=0).max(), np.ptp(Tm, axis=0).max())
    shared = [i for i in range(3) if np.min(np.linalg.norm(Tm - Tp[i], axis=1)) <= 1e-12 * scale]
    if len(shared) != 2:
        raise ValueError("triangles do not share an edge")
    return shared


def _edge_pair_setup(T_plus, T_minus, p: int):
    Tp = np.asarray(T_plus, float).reshape(3, 2)
    Tm = np.asarray(T_minus, float).reshape(3, 2)
    i, k = _shared_edge(Tp, Tm)
    opp = 3 - i - k
    # label (z, P1, P2) counterclockwise in T_plus with E = conv{z, P2}
    def ccw(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) > 0
    iz, i2 = (i, k) if ccw(Tp[i], Tp[opp], Tp[k]) else (k, i)
    z, P2 = Tp[iz], Tp[i2]
    n = edge_normal(z, P2)  # points into T_minus
    funcs: list[dict[int, Vec]] = [dict() for _ in range(4)]
    grads = {}
    for side, T in enumerate((Tp, Tm)):
        jz, j2, _ = _locate(T, z, P2)
        phz = PolyOnTriangle.barycentric(jz, T)
        ph2 = phz._like(PolyOnTriangle.barycentric(j2, T).coef)
        if side == 0:
            grads["2"] = np.array([d.coef[0, 0] for d in ph2.grad()])
            grads["z"] = np.array([d.coef[0, 0] for d in phz.grad()])
        psi = phz._like(edge_bubble(T, jz, j2, p).coef)
        a = ph2 * phz * phz * 12.0
        b = ph2 * ph2 * phz * 12.0
        c = (ph2 * ph2) * (phz * phz) * 30.0
        funcs[0][side] = (a * grads["2"][0], a * grads["2"][1])
        funcs[1][side] = (b * grads["z"][0], b * grads["z"][1])
        funcs[2][side] = (psi * n[0], psi * n[1])
        funcs[3][side] = (c * n[0], c * n[1])
    order = (iz, opp, i2)
    V = np.array([lambda_apply(divergence(f[0]), order) for f in funcs])
    return Tp, Tm, funcs, V, order, (z, Tp[opp], P2)


def edge_pair_vandermonde(T_plus, T_minus, p: int) -> np.ndarray:
    """4x4 matrix of the four edge functions against the functionals of ``T_plus``.

    Diagnostic only: for ``p = 3`` the fourth function is quartic and lies
    outside the cubic space.
    """
    return _edge_pair_setup(T_plus, T_minus, p)[3]


def edge_pair_right_inverse(T_plus, T_minus, p: int, g: PolyOnTriangle,
                            tol: float = 1e-10) -> PatchVelocity:
    """``v`` in ``CR^p_0`` of the edge patch with ``div v = g`` on ``T_plus`` (``p >= 4``).

    ``g`` must be given on ``T_plus`` with the same vertex order.
    """
    if p < 4:
        raise ValueError("edge-pair construction is certified for p >= 4 only "
                         "(the quartic edge function is not in P_3)")
    Tp, Tm, funcs, V, order, (z, P1, P2) = _edge_pair_setup(T_plus, T_minus, p)
    if not np.allclose(g.verts, Tp):
        raise ValueError("g must be defined on T_plus in its given vertex order")
    if g.degree > p - 1:
        raise ValueError(f"g has degree {g.degree} > p - 1")
    c = np.linalg.solve(V.T, lambda_apply(g, order))
    pieces: dict[int, Vec] = {}
    for ck, f in zip(c, funcs):
        for side, u in f.items():
            pieces[side] = _add(pieces.get(side), (u[0] * ck, u[1] * ck))
    gn = float(np.sqrt((g * g).integrate()))
    r = g - divergence(pieces[0])
    rn = max(float(np.sqrt(max((r * r).integrate(), 0.0))), 1e-300)
    bub = bubble_right_inverse(Tp, p, r, tol=tol * gn / rn)
    pieces[0] = _add(pieces[0], bub.velocity())
    res = float(np.sqrt(max(((g - divergence(pieces[0])) ** 2).integrate(), 0.0)))
    if res > tol * gn:
        raise SurjectivityFailure(f"edge-pair residual {res / gn:.3e} exceeds {tol}")
    P3 = Tm[_locate(Tm, z, P2)[2]]
    jumps = np.abs(edge_moments(pieces[0], z, P2, p) - edge_moments(pieces[1], z, P2, p)).max()
    boundary = max(np.abs(edge_moments(pieces[0], z, P1, p)).max(),
                   np.abs(edge_moments(pieces[0], P1, P2, p)).max(),
                   np.abs(edge_moments(pieces[1], P2, P3, p)).max(),
                   np.abs(edge_moments(pieces[1], P3, z, p)).max())
    return PatchVelocity(
        pieces=pieces,
        coeffs={"edge": c, "bubble": bub.coeffs},
        residual=res / gn,
        g_norm=gn,
        info={"cond_vandermonde": float(np.linalg.cond(V)), "jump_moment": float(jumps),
              "boundary_moment": float(boundary)},
    )


def patch_right_inverse(patch: VertexPatch, p: int, g: list[PolyOnTriangle],
                        tol: float = 1e-9, basis: PatchBasis | None = None) -> PatchVelocity:
    """Right-inverse on a vertex patch for mean-zero piecewise ``g``.

    ``g[j]`` lives on ``patch.triangle(j)``.  Solves the transposed Vandermonde
    system for the edge functions, then removes the remainder triangle by
    triangle with bubbles.
    """
    basis = basis or patch_basis(patch, p)
    m = patch.m
    if len(g) != m:
        raise ValueError(f"need {m} pieces of g")
    for j, gj in enumerate(g):
        if gj.degree > p - 1:
            raise ValueError(f"g[{j}] has degree {gj.degree} > p - 1")
    gn = float(np.sqrt(sum((gj * gj).integrate() for gj in g)))
    area = sum(gj.area for gj in g)
    mean = sum(gj.integrate() for gj in g)
    if abs(mean) > 1e-10 * gn * np.sqrt(area):
        raise ValueError(f"g has nonzero mean {mean:.3e} over the patch")
    from .patchmat import assemble_M_numeric

    M = assemble_M_numeric(patch, p, basis)
    x = np.concatenate([lambda_apply(gj) for gj in g])
    c, _ = linalg.lstsq(M.T, x)
    pieces = basis.combine(c)
    bub_coeffs = {}
    for j in range(m):
        r = g[j] - divergence(pieces[j])
        rn = float(np.sqrt(max((r * r).integrate(), 0.0)))
        if rn <= 1e-15 * max(gn, 1e-300):
            continue
        sol = bubble_right_inverse(patch.triangle(j), p, _on(r, g[j]), tol=tol * gn / rn)
        bub_coeffs[j] = sol.coeffs
        bv = sol.velocity()
        pieces[j] = _add(pieces[j], (pieces[j][0]._like(bv[0].coef), pieces[j][1]._like(bv[1].coef)))
    res = float(np.sqrt(sum(max(((g[j] - divergence(pieces[j])) ** 2).integrate(), 0.0)
                            for j in range(m))))
    if res > tol * gn:
        raise SurjectivityFailure(f"patch residual {res / gn:.3e} exceeds {tol}")
    return PatchVelocity(pieces=pieces, coeffs={"patch": c, "bubble": bub_coeffs},
                         residual=res / gn, g_norm=gn)


def _on(r: PolyOnTriangle, like: PolyOnTriangle) -> PolyOnTriangle:
    return like._like(r.coef)


def random_pressure(patch: VertexPatch, d: int, rng, mean_zero: bool = True) -> list[PolyOnTriangle]:
    """Random piecewise polynomial of degree ``d`` (normalised, optionally mean-zero)."""
    n = (d + 1) * (d + 2) // 2
    g = [PolyOnTriangle.from_coefficients(rng.standard_normal(n), d, patch.triangle(j))
         for j in range(patch.m)]
    if mean_zero:
        shift = sum(gj.integrate() for gj in g) / sum(gj.area for gj in g)
        g = [gj - shift for gj in g]
    return g


def random_patch_velocity(patch: VertexPatch, p: int, rng,
                          basis: PatchBasis | None = None) -> dict[int, Vec]:
    """Random member of the patch space plus bubbles, as pieces per triangle."""
    basis = basis or patch_basis(patch, p)
    pieces = basis.combine(rng.standard_normal(len(basis)))
    for j in range(patch.m):
        bb = bubble_basis(patch.triangle(j), p)
        bv = bb.combine(rng.standard_normal(bb.dim))
        pieces[j] = _add(pieces[j], (pieces[j][0]._like(bv[0].coef), pieces[j][1]._like(bv[1].coef)))
    return pieces


# ---------------------------------------------------------------------------
# minimal Crouzeix-Raviart space


def minimal_cr_space(tri: Triangulation, p: int) -> VelocitySpace:
    """Conforming ``P_p`` velocities plus one normal edge function per interior edge."""
    if p < 3 or p % 2 == 0:
        raise ValueError(f"minimal space needs odd p >= 3 (got p={p})")
    conf = conforming_space(tri, p)
    raw = RawSpace(tri, p)
    cols = []
    for e in np.flatnonzero(~tri.boundary_edge):
        a, b = tri.edges[e]
        n = edge_normal(tri.vertices[a], tri.vertices[b])
        col = np.zeros(raw.dim)
        for t in tri.edge_triangles[e]:
            verts = tri.triangle_coords(t)
            loc = list(tri.triangles[t])
            psi = edge_bubble(verts, loc.index(a), loc.index(b), p)
            raw.coefficients_from(t, psi * n[0], psi * n[1], out=col)
        cols.append(col)
    B = np.column_stack(cols) if cols else np.zeros((raw.dim, 0))
    Q1 = conf.basis
    B = B - Q1 @ (Q1.T @ B)
    Q2 = linalg.orth(B, 1e-10)
    if Q2.shape[1] != B.shape[1]:
        raise linalg.LinAlgFailure("edge functions are dependent on the conforming space")
    basis = np.hstack([Q1, Q2])
    tags = ("conforming",) * Q1.shape[1] + ("edge-bubble",) * Q2.shape[1]
    return VelocitySpace(tri, p, basis, tags, "minimal")
