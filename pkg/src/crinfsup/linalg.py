"""Dense linear algebra: SVD nullspaces, deflated generalized eigenvalues, WCDD test."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla

__all__ = [
    "LinAlgFailure",
    "as_matrix",
    "svd",
    "nullspace",
    "rank",
    "orth",
    "principal_angle",
    "lstsq",
    "deflated_generalized_eigh",
    "min_nonzero_generalized_eig",
    "wcdd_nonsingular",
]

RANK_RTOL = 1e-10
LSTSQ_RTOL = 1e-12


class LinAlgFailure(RuntimeError):
    """Factorisation failed to converge or a matrix lacks a required property."""


def as_matrix(a) -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if m.ndim != 2:
        raise ValueError("expected a 2-D array")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def svd(mat, full_matrices=True):
    try:
        return np.linalg.svd(as_matrix(mat), full_matrices=full_matrices)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise LinAlgFailure(f"SVD did not converge: {exc}") from exc


def _rank_from_singular(s, rtol):
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def nullspace(mat, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical kernel of ``mat``.

    Singular values ``<= rtol * sigma_max`` count as zero.
    """
    if not 0 < rtol < 1:
        raise ValueError("rtol must lie in (0, 1)")
    A = as_matrix(mat)
    _, s, vt = svd(A, full_matrices=True)
    r = _rank_from_singular(s, rtol)
    return vt[r:].T.copy()


def rank(mat, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(as_matrix(mat), compute_uv=False)
    return _rank_from_singular(s, rtol)


def orth(mat, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis of the column space."""
    u, s, _ = svd(mat, full_matrices=False)
    return u[:, : _rank_from_singular(s, rtol)]


def principal_angle(Q1, Q2) -> float:
    """Largest principal angle between two column spaces (radians).

    Uses the sine form ``||(I - P1) Q2||`` which is accurate for tiny angles;
    returns ``pi/2`` when the dimensions differ.
    """
    Q1, Q2 = orth(Q1, 1e-14), orth(Q2, 1e-14)
    if Q1.shape[1] != Q2.shape[1]:
        return float(np.pi / 2)
    if Q1.shape[1] == 0:
        return 0.0
    R = Q2 - Q1 @ (Q1.T @ Q2)
    s = np.linalg.norm(R, 2)
    return float(np.arcsin(min(1.0, s)))


def lstsq(mat, rhs, rtol: float = LSTSQ_RTOL):
    """Minimum-norm least-squares solution and residual 2-norm."""
    A = as_matrix(mat)
    b = np.asarray(rhs, dtype=float)
    u, s, vt = svd(A, full_matrices=False)
    r = _rank_from_singular(s, rtol)
    x = vt[:r].T @ ((u[:, :r].T @ b) / (s[:r] if b.ndim == 1 else s[:r, None]))
    res = np.linalg.norm(A @ x - b, axis=0)
    return x, (float(res) if b.ndim == 1 else res)


def deflated_generalized_eigh(S, Mmass, deflate_vectors=None):
    """Eigenpairs of ``S x = lam Mmass x`` on the Mmass-complement of ``deflate_vectors``.

    Cholesky ``Mmass = L L^T`` turns the pencil into the symmetric matrix
    ``L^-1 S L^-T``; the transformed deflation space is projected out with an
    orthonormal complement basis before the symmetric eigensolve.  Returns
    ascending eigenvalues and ``Mmass``-orthonormal eigenvectors.
    """
    S = as_matrix(S)
    Mm = as_matrix(Mmass)
    n = S.shape[0]
    if S.shape != (n, n) or Mm.shape != (n, n):
        raise ValueError("S and Mmass must be square of equal size")
    try:
        L = np.linalg.cholesky(0.5 * (Mm + Mm.T))
    except np.linalg.LinAlgError as exc:
        raise LinAlgFailure("mass matrix is not positive definite") from exc
    Linv_S = sla.solve_triangular(L, 0.5 * (S + S.T), lower=True)
    St = sla.solve_triangular(L, Linv_S.T, lower=True)
    St = 0.5 * (St + St.T)
    if deflate_vectors is None or np.size(deflate_vectors) == 0:
        Q = np.eye(n)
    else:
        D = np.asarray(deflate_vectors, float).reshape(n, -1)
        Dt = orth(L.T @ D, 1e-14)
        Q = nullspace(Dt.T, 1e-12) if Dt.shape[1] else np.eye(n)
    if Q.shape[1] == 0:
        raise LinAlgFailure("all eigenvalues deflated")
    H = Q.T @ St @ Q
    try:
        vals, W = np.linalg.eigh(0.5 * (H + H.T))
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise LinAlgFailure(f"eigensolver did not converge: {exc}") from exc
    X = sla.solve_triangular(L.T, Q @ W, lower=False)
    return vals, X


def min_nonzero_generalized_eig(S, Mmass, deflate_vectors=None) -> float:
    """Smallest eigenvalue of the pencil ``(S, Mmass)`` after deflation."""
    vals, _ = deflated_generalized_eigh(S, Mmass, deflate_vectors)
    return float(vals[0])


def wcdd_nonsingular(mat, tol: float = 1e-12) -> bool:
    """Weakly chained diagonal dominance, a sufficient test for regularity.

    Every row must be weakly dominant, at least one strictly, and each row
    must reach a strictly dominant row along nonzero off-diagonal entries.
    ``tol`` absorbs rounding in rows that are dominant with equality.
    """
    A = as_matrix(mat)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("square matrix required")
    absA = np.abs(A)
    diag = np.diag(absA).copy()
    off = absA.sum(axis=1) - diag
    scale = np.maximum(diag, off)
    if np.any(diag < off - tol * scale):
        return False
    strict = diag > off + tol * scale
    if not strict.any():
        return False
    # reverse reachability from strict rows: i -> j whenever a_ij != 0
    reached = strict.copy()
    frontier = list(np.flatnonzero(strict))
    adj_in = [np.flatnonzero((absA[:, j] > 0) & (np.arange(n) != j)) for j in range(n)]
    while frontier:
        j = frontier.pop()
        for i in adj_in[j]:
            if not reached[i]:
                reached[i] = True
                frontier.append(i)
    return bool(reached.all())
