"""Patch basis functions, the Vandermonde matrix of a vertex patch and its kernel.

All indices are 0-based.  Triangle ``T[j]`` has the local vertex order
``(z, P[j], P[j+1])`` and owns the four functional slots ``4j .. 4j+3``
(values at those three vertices, then the integral).  Edge ``E[j]`` owns the
five basis rows ``5j .. 5j+4`` in the order

    phi_j phi_z^2 n,  phi_j phi_z^2 t,  phi_j^2 phi_z n,  phi_j^2 phi_z t,  psi_j n

with ``t = (z - P[j])/|E[j]|`` and ``n`` the unit normal pointing into ``T[j]``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import linalg
from .mesh import PatchGeometry, VertexPatch, patch_geometry
from .poly import (
    MAX_QUADRATURE_DEGREE,
    PolyOnTriangle,
    divergence,
    legendre_derivative_at_one,
    legendre_power_series,
)

__all__ = [
    "edge_bubble",
    "PatchBasis",
    "patch_basis",
    "lambda_apply",
    "assemble_M_numeric",
    "assemble_M_closed_form",
    "scaled_block",
    "scaling_matrices",
    "PatchMatrices",
    "derived_matrices",
    "kernel_vectors",
    "LemmaReport",
    "verify_patch_lemmas",
    "B_ROWS",
    "first_case_tridiagonal",
    "cyclic_pair_matrix",
]

# rows of each 5-row block kept in B (second, fourth and fifth)
B_ROWS = (1, 3, 4)


def _vec(scalar: PolyOnTriangle, v) -> tuple[PolyOnTriangle, PolyOnTriangle]:
    return scalar * float(v[0]), scalar * float(v[1])


def edge_bubble(verts, ia: int, ib: int, p: int) -> PolyOnTriangle:
    """Scalar Crouzeix-Raviart edge function for the edge ``(ia, ib)`` of a triangle.

    ``6/Le_p'(1) * (Le_p(1 - 2 phi_k) + (5 Le_p'(1) - 30) phi_a^2 phi_b^2)`` with
    ``k`` the local vertex opposite the edge.  It is identically
    ``1 + (5 Le_p'(1) - 30) phi_a^2 phi_b^2`` (times the prefactor) on the
    edge and vanishes at the Gauss points of the two other edges.
    """
    k = 3 - ia - ib
    lk = PolyOnTriangle.barycentric(k, verts)
    la = lk._like(PolyOnTriangle.barycentric(ia, verts).coef)
    lb = lk._like(PolyOnTriangle.barycentric(ib, verts).coef)
    dle = legendre_derivative_at_one(p)
    arg = 1.0 - 2.0 * lk
    out = arg.compose(legendre_power_series(p))
    extra = 5.0 * dle - 30.0
    if extra != 0.0:
        out = out + extra * (la * la) * (lb * lb)
    return out * (6.0 / dle)


@dataclass
class PatchBasis:
    """The ``5m`` patch functions; ``pieces[k]`` maps triangle index to ``(ux, uy)``."""

    patch: VertexPatch
    p: int
    pieces: list[dict[int, tuple[PolyOnTriangle, PolyOnTriangle]]]

    def __len__(self):
        return len(self.pieces)

    def support(self, k: int) -> tuple[int, ...]:
        return tuple(self.pieces[k])

    def combine(self, coeffs) -> dict[int, tuple[PolyOnTriangle, PolyOnTriangle]]:
        """Piecewise vector polynomial ``sum_k coeffs[k] b(k)``."""
        out: dict[int, list] = {}
        for c, piece in zip(coeffs, self.pieces):
            if c == 0.0:
                continue
            for t, (ux, uy) in piece.items():
                if t in out:
                    out[t][0] = out[t][0] + c * ux
                    out[t][1] = out[t][1] + c * uy
                else:
                    out[t] = [c * ux, c * uy]
        return {t: (u[0], u[1]) for t, u in out.items()}


def _check_degree(p: int):
    if p < 3 or p % 2 == 0:
        raise ValueError(f"patch basis needs odd p >= 3 (got p={p}); "
                         "the edge function is only constructed for odd degrees")


def patch_basis(patch: VertexPatch, p: int) -> PatchBasis:
    """Materialise the ``5m`` vector functions of the patch for odd ``p >= 3``."""
    _check_degree(p)
    m = patch.m
    # one barycentric triple per triangle, sharing the affine data
    bary = []
    for t in range(m):
        verts = patch.triangle(t)
        l0 = PolyOnTriangle.barycentric(0, verts)
        bary.append((l0, l0._like(PolyOnTriangle.barycentric(1, verts).coef),
                     l0._like(PolyOnTriangle.barycentric(2, verts).coef)))
    pieces = []
    for j in range(m):
        n, t_vec = patch.normal(j), patch.tangent(j)
        sides = {(j - 1) % m: 2, j: 1}  # local index of P[j] in T[j-1] and T[j]
        funcs = [dict() for _ in range(5)]
        for tri, loc in sides.items():
            phz, phj = bary[tri][0], bary[tri][loc]
            a = phj * phz * phz
            b = phj * phj * phz
            psi = edge_bubble(patch.triangle(tri), 0, loc, p)
            psi = phz._like(psi.coef)
            funcs[0][tri] = _vec(a, n)
            funcs[1][tri] = _vec(a, t_vec)
            funcs[2][tri] = _vec(b, n)
            funcs[3][tri] = _vec(b, t_vec)
            funcs[4][tri] = _vec(psi, n)
        pieces.extend(funcs)
    return PatchBasis(patch, p, pieces)


def lambda_apply(g: PolyOnTriangle, order=(0, 1, 2)) -> np.ndarray:
    """``(g(v_a), g(v_b), g(v_c), int_T g)`` for the local vertex ``order``."""
    if g.degree > MAX_QUADRATURE_DEGREE:
        raise ValueError(f"degree {g.degree} too high for the quadrature tables")
    vals = g.vertex_values()
    return np.array([vals[order[0]], vals[order[1]], vals[order[2]], g.integrate()])


def assemble_M_numeric(patch: VertexPatch, p: int, basis: PatchBasis | None = None) -> np.ndarray:
    """``M[k, 4t + c] = Lambda_{T[t], c}(div b(k))`` by evaluation and quadrature."""
    if basis is None:
        basis = patch_basis(patch, p)
    m = patch.m
    M = np.zeros((5 * m, 4 * m))
    for k, piece in enumerate(basis.pieces):
        for t, u in piece.items():
            M[k, 4 * t: 4 * t + 4] = lambda_apply(divergence(u))
    return M


def scaled_block(geom: PatchGeometry, j: int) -> np.ndarray:
    """The cotangent form of the 5x8 block ``(A_j^-, A_j^+)`` of edge ``E[j]``."""
    m = geom.m
    jm = (j - 1) % m
    cot = lambda x: np.cos(x) / np.sin(x)  # noqa: E731
    gm, gp = geom.gamma_minus[j], geom.gamma_plus[j]
    blk = np.zeros((5, 8))
    blk[0, 0], blk[0, 3], blk[0, 4], blk[0, 7] = cot(geom.omega[jm]), gm, -cot(geom.omega[j]), -gp
    blk[1, 0], blk[1, 4] = 1.0, 1.0
    blk[2, 2], blk[2, 3], blk[2, 5], blk[2, 7] = cot(geom.beta[jm]), gm, -cot(geom.alpha[j]), -gp
    blk[3, 2], blk[3, 5] = 1.0, 1.0
    blk[4, :4], blk[4, 4:] = gm, -gp
    return blk


def scaling_matrices(geom: PatchGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Diagonals of the left (5m) and right (4m) scalings."""
    E, area = geom.edge_length, geom.area
    dl = np.column_stack([E, -E, E, E, E / 12.0]).ravel()
    dr = np.column_stack([np.ones_like(area), np.ones_like(area), np.ones_like(area),
                          6.0 / area]).ravel()
    return dl, dr


def assemble_M_closed_form(geom: PatchGeometry) -> np.ndarray:
    """Cyclic block-bidiagonal Vandermonde matrix from the cotangent blocks."""
    m = geom.m
    dl, dr = scaling_matrices(geom)
    A = np.zeros((5 * m, 4 * m))
    for j in range(m):
        jm = (j - 1) % m
        blk = scaled_block(geom, j)
        A[5 * j: 5 * j + 5, 4 * jm: 4 * jm + 4] = blk[:, :4]
        A[5 * j: 5 * j + 5, 4 * j: 4 * j + 4] = blk[:, 4:]
    return A / dl[:, None] / dr[None, :]


def kernel_vectors(geom: PatchGeometry) -> tuple[list[np.ndarray], np.ndarray]:
    """``([v_0, ..., v_{m+1}], s)`` in ``R^{4m}``.

    ``v_0`` carries the areas in the integral slots; ``v_j`` (``j = 1..m``)
    couples the two slots of vertex ``P[j-1]`` in ``T[j-2]``/``T[j-1]`` with
    their integrals; ``v_{m+1}`` alternates over the ``z`` and integral slots.
    """
    m = geom.m
    n = 4 * m
    s = np.zeros(n)
    s[3::4] = 1.0
    v0 = geom.area[:, None] * np.eye(1, 4, 3)
    vs = [v0.ravel()]
    for j in range(1, m + 1):
        v = np.zeros(n)
        # 1-based formula e_{4j-5} - e_{4j-4} - e_{4j-2} + e_{4j}, cyclic
        for idx, sign in ((4 * j - 5, 1.0), (4 * j - 4, -1.0), (4 * j - 2, -1.0), (4 * j, 1.0)):
            v[(idx - 1) % n] += sign
        vs.append(v)
    last = np.zeros(n)
    signs = (-1.0) ** np.arange(m)
    last[0::4] = signs
    last[3::4] = -signs
    vs.append(last)
    return vs, s


@dataclass
class PatchMatrices:
    M: np.ndarray
    A: np.ndarray
    B: np.ndarray
    D_L: np.ndarray
    D_R: np.ndarray
    v: list[np.ndarray]
    s: np.ndarray

    @property
    def m(self) -> int:
        return self.M.shape[0] // 5


def derived_matrices(M, geom: PatchGeometry) -> PatchMatrices:
    M = np.asarray(M, dtype=float)
    m = geom.m
    if M.shape != (5 * m, 4 * m):
        raise ValueError(f"M has shape {M.shape}, expected {(5 * m, 4 * m)}")
    dl, dr = scaling_matrices(geom)
    A = dl[:, None] * M * dr[None, :]
    rows = [5 * j + r for j in range(m) for r in B_ROWS]
    v, s = kernel_vectors(geom)
    return PatchMatrices(M=M, A=A, B=A[rows], D_L=np.diag(dl), D_R=np.diag(dr), v=v, s=s)


@dataclass
class LemmaReport:
    m: int
    p: int
    sigma: int
    dim_ker_B: int
    dim_ker_A: int
    dim_ker_M: int
    rank_M: int
    angles: dict[str, float]
    residuals: dict[str, float]
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_json(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d


def verify_patch_lemmas(patch: VertexPatch, p: int = 3, rtol: float = linalg.RANK_RTOL,
                        angle_tol: float = 1e-9, residual_tol: float = 1e-10) -> LemmaReport:
    """Kernel dimensions and kernel directions of ``B``, ``A`` and ``M`` for one patch."""
    geom = patch_geometry(patch)
    pm = derived_matrices(assemble_M_numeric(patch, p), geom)
    m, sigma = geom.m, geom.sigma
    kB = linalg.nullspace(pm.B, rtol)
    kA = linalg.nullspace(pm.A, rtol)
    kM = linalg.nullspace(pm.M, rtol)
    rank_M = 4 * m - kM.shape[1]
    predicted_B = np.column_stack(pm.v[: m + 1 + sigma])
    angles = {
        "ker_A_vs_v0": linalg.principal_angle(kA, pm.v[0][:, None]),
        "ker_M_vs_s": linalg.principal_angle(kM, pm.s[:, None]),
        "ker_B_vs_span_v": linalg.principal_angle(kB, predicted_B),
    }
    normB = np.linalg.norm(pm.B, 2)
    res_v = max(np.linalg.norm(pm.B @ v) for v in pm.v[: m + 1 + sigma]) / normB
    e1 = np.zeros(3 * m)
    e1[0] = 1.0
    res_last = float(np.abs(pm.B @ pm.v[m + 1] - (1 - (-1) ** m) * e1).max())
    residuals = {
        "B_v_k": float(res_v),
        "B_v_last_identity": res_last,
        "M_s": float(np.linalg.norm(pm.M @ pm.s) / np.linalg.norm(pm.M, 2)),
    }
    checks = {
        "dim_ker_B": kB.shape[1] == m + 1 + sigma,
        "dim_ker_A": kA.shape[1] == 1,
        "dim_ker_M": kM.shape[1] == 1,
        "rank_M": rank_M == 4 * m - 1,
        "angle_ker_A": angles["ker_A_vs_v0"] <= angle_tol,
        "angle_ker_M": angles["ker_M_vs_s"] <= angle_tol,
        "angle_ker_B": angles["ker_B_vs_span_v"] <= angle_tol,
        "B_v_k": res_v <= residual_tol,
        "B_v_last_identity": res_last <= 1e-12,
    }
    checks = {k: bool(v) for k, v in checks.items()}
    return LemmaReport(m=m, p=p, sigma=sigma, dim_ker_B=kB.shape[1], dim_ker_A=kA.shape[1],
                       dim_ker_M=kM.shape[1], rank_M=rank_M, angles=angles,
                       residuals=residuals, checks=checks)


# ---------------------------------------------------------------------------
# small matrices that appear inside the kernel argument


def first_case_tridiagonal(lams) -> np.ndarray:
    """``k x k`` tridiagonal with rows ``(-lam_i, 1, lam_i - 1)``, truncated at the ends."""
    lams = np.asarray(lams, dtype=float)
    k = len(lams)
    T = np.eye(k)
    for i in range(k):
        if i > 0:
            T[i, i - 1] = -lams[i]
        if i < k - 1:
            T[i, i + 1] = lams[i] - 1.0
    return T


def cyclic_pair_matrix(m: int) -> np.ndarray:
    """Identity plus the cyclic down-shift: rows ``y_{j-1} + y_j = 0`` of the odd slots."""
    return np.eye(m) + np.roll(np.eye(m), 1, axis=0)
