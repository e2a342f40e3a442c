"""Legendre polynomials, Gauss points and polynomial calculus on triangles.

Polynomials on a triangle with vertices ``(x0, x1, x2)`` are stored as
coefficient arrays ``c[a, b]`` of the monomials ``l1**a * l2**b`` where
``l1, l2`` are the barycentric coordinates of ``x1`` and ``x2``; the third
coordinate ``l0 = 1 - l1 - l2`` is eliminated.  ``(l1, l2)`` are exactly the
reference coordinates of the affine map ``x = x0 + J @ (l1, l2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as nppoly
from scipy.signal import convolve2d

__all__ = [
    "legendre",
    "legendre_derivative_at_one",
    "gauss_points",
    "gauss_legendre",
    "QuadratureRule",
    "triangle_quadrature",
    "PolyOnTriangle",
    "eval_grad",
    "integrate",
    "divergence",
    "h1_seminorm_sq",
    "l2_norm_sq",
    "monomial_exponents",
    "legendre_power_series",
]

NEWTON_TOL = 1e-15
NEWTON_MAXITER = 50
MAX_QUADRATURE_DEGREE = 20


def legendre(p, t):
    """Return ``(Le_p(t), Le_p'(t))`` with the normalisation ``Le_p(1) = 1``.

    Works elementwise on arrays.  Uses the three-term recurrence and the
    derivative identity ``Le_p' = p Le_{p-1} + t Le_{p-1}'``.
    """
    t = np.asarray(t, dtype=float)
    if p < 0:
        raise ValueError("degree must be non-negative")
    prev, cur = np.zeros_like(t), np.ones_like(t)
    dcur = np.zeros_like(t)
    for k in range(1, p + 1):
        nxt = ((2 * k - 1) * t * cur - (k - 1) * prev) / k
        dnxt = k * cur + t * dcur
        prev, cur = cur, nxt
        dcur = dnxt
    if t.ndim == 0:
        return float(cur), float(dcur)
    return cur, dcur


def legendre_derivative_at_one(p: int) -> float:
    """``Le_p'(1) = p (p + 1) / 2``."""
    return p * (p + 1) / 2.0


@lru_cache(maxsize=None)
def _gauss_points(p: int) -> tuple[float, ...]:
    k = np.arange(1, p + 1)
    # Chebyshev-type initial guesses, descending
    x = np.cos(np.pi * (k - 0.25) / (p + 0.5))
    for _ in range(NEWTON_MAXITER):
        val, der = legendre(p, x)
        dx = val / der
        x = x - dx
        if np.max(np.abs(dx)) <= NEWTON_TOL:
            break
    x = np.sort(x)
    # symmetrise; the zeros of Le_p are symmetric about 0
    x = 0.5 * (x - x[::-1])
    return tuple(float(v) for v in x)


def gauss_points(p: int) -> np.ndarray:
    """The ``p`` zeros of ``Le_p`` in ``(-1, 1)``, ascending."""
    if p < 1:
        raise ValueError("need p >= 1")
    return np.array(_gauss_points(p))


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on ``[-1, 1]`` (exact to degree 2n-1)."""
    x = gauss_points(n)
    _, der = legendre(n, x)
    w = 2.0 / ((1.0 - x**2) * der**2)
    return x, w


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle; weights sum to one (multiply by |T|)."""

    points: np.ndarray  # (n, 3) barycentric triples (l0, l1, l2)
    weights: np.ndarray  # (n,)
    degree: int

    @property
    def ref(self) -> np.ndarray:
        """Reference coordinates ``(l1, l2)`` of the points."""
        return self.points[:, 1:]


@lru_cache(maxsize=None)
def _triangle_quadrature(D: int) -> QuadratureRule:
    n = math.ceil((D + 2) / 2)
    x, w = gauss_legendre(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    # collapsed (Duffy) map of the unit square onto the reference triangle
    l1 = U.ravel()
    l2 = (V * (1.0 - U)).ravel()
    weights = (WU * WV * (1.0 - U)).ravel() * 2.0
    pts = np.column_stack([1.0 - l1 - l2, l1, l2])
    pts.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(pts, weights, D)


def triangle_quadrature(D: int) -> QuadratureRule:
    """Collapsed tensor Gauss rule exact for total degree ``D``."""
    if not 1 <= D <= MAX_QUADRATURE_DEGREE:
        raise ValueError(f"quadrature degree {D} outside 1..{MAX_QUADRATURE_DEGREE}")
    return _triangle_quadrature(int(D))


def monomial_exponents(d: int) -> list[tuple[int, int]]:
    """Exponents ``(a, b)`` with ``a + b <= d`` in graded order."""
    return [(a, k - a) for k in range(d + 1) for a in range(k, -1, -1)]


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.atleast_2d(np.asarray(c, dtype=float))
    n = max(c.shape)
    out = np.zeros((n, n))
    out[: c.shape[0], : c.shape[1]] = c
    return out


class PolyOnTriangle:
    """A scalar polynomial on a fixed triangle, in barycentric monomials."""

    __slots__ = ("coef", "verts", "_jac", "_jinv", "_area")

    def __init__(self, coef, verts):
        self.coef = _trim(coef)
        self.verts = np.asarray(verts, dtype=float).reshape(3, 2)
        self._jac = np.column_stack([self.verts[1] - self.verts[0], self.verts[2] - self.verts[0]])
        det = np.linalg.det(self._jac)
        self._area = 0.5 * abs(det)
        self._jinv = np.linalg.inv(self._jac)

    def _like(self, coef) -> "PolyOnTriangle":
        out = object.__new__(PolyOnTriangle)
        out.coef = _trim(coef)
        out.verts, out._jac, out._jinv, out._area = self.verts, self._jac, self._jinv, self._area
        return out

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, value, verts) -> "PolyOnTriangle":
        return cls([[value]], verts)

    @classmethod
    def barycentric(cls, i: int, verts) -> "PolyOnTriangle":
        """Barycentric coordinate of local vertex ``i`` (the P1 nodal function)."""
        c = np.zeros((2, 2))
        if i == 0:
            c[0, 0], c[1, 0], c[0, 1] = 1.0, -1.0, -1.0
        elif i == 1:
            c[1, 0] = 1.0
        elif i == 2:
            c[0, 1] = 1.0
        else:
            raise ValueError("local vertex index must be 0, 1 or 2")
        return cls(c, verts)

    @classmethod
    def from_coefficients(cls, values, d: int, verts) -> "PolyOnTriangle":
        """Build from a flat vector over :func:`monomial_exponents` ``(d)``."""
        c = np.zeros((d + 1, d + 1))
        for v, (a, b) in zip(values, monomial_exponents(d)):
            c[a, b] = v
        return cls(c, verts)

    def to_coefficients(self, d: int | None = None) -> np.ndarray:
        d = self.degree if d is None else d
        c = self.coef
        a, b = np.indices(c.shape)
        excess = np.abs(c[a + b > d])
        if excess.size and excess.max() > 1e-12 * max(1.0, np.abs(c).max()):
            raise ValueError(f"polynomial of degree {self.degree} exceeds {d}")
        return np.array([c[a, b] if a < c.shape[0] and b < c.shape[1] else 0.0
                         for a, b in monomial_exponents(d)])

    # -- geometry -----------------------------------------------------------
    @property
    def area(self) -> float:
        return self._area

    @property
    def degree(self) -> int:
        nz = np.argwhere(self.coef != 0.0)
        if nz.size == 0:
            return 0
        return int(nz.sum(axis=1).max())

    def to_ref(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - self.verts[0]) @ self._jinv.T

    # -- arithmetic ---------------------------------------------------------
    def _same(self, other: "PolyOnTriangle"):
        if other.verts is not self.verts and not np.array_equal(self.verts, other.verts):
            raise ValueError("polynomials live on different triangles")

    def __add__(self, other):
        if isinstance(other, PolyOnTriangle):
            self._same(other)
            n = max(self.coef.shape[0], other.coef.shape[0])
            c = np.zeros((n, n))
            c[: self.coef.shape[0], : self.coef.shape[0]] += self.coef
            c[: other.coef.shape[0], : other.coef.shape[0]] += other.coef
            return self._like(c)
        c = self.coef.copy()
        c[0, 0] += other
        return self._like(c)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self.coef)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, PolyOnTriangle):
            self._same(other)
            return self._like(convolve2d(self.coef, other.coef))
        return self._like(self.coef * other)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = self._like([[1.0]])
        for _ in range(k):
            out = out * self
        return out

    def compose(self, coeffs) -> "PolyOnTriangle":
        """``q(self)`` for a univariate power series ``coeffs`` (Horner)."""
        out = self._like([[0.0]])
        for a in coeffs[::-1]:
            out = out * self + a
        return out

    # -- calculus -----------------------------------------------------------
    def deriv_ref(self) -> tuple["PolyOnTriangle", "PolyOnTriangle"]:
        d1 = nppoly.polyder(self.coef, axis=0) if self.coef.shape[0] > 1 else np.zeros((1, 1))
        d2 = nppoly.polyder(self.coef, axis=1) if self.coef.shape[1] > 1 else np.zeros((1, 1))
        return self._like(d1), self._like(d2)

    def grad(self) -> tuple["PolyOnTriangle", "PolyOnTriangle"]:
        """Cartesian partial derivatives ``(d/dx, d/dy)`` as polynomials."""
        d1, d2 = self.deriv_ref()
        G = self._jinv
        dx = d1 * G[0, 0] + d2 * G[1, 0]
        dy = d1 * G[0, 1] + d2 * G[1, 1]
        return dx, dy

    def eval_ref(self, l1, l2):
        return nppoly.polyval2d(l1, l2, self.coef)

    def __call__(self, x):
        """Evaluate at Cartesian point(s) ``x`` of shape ``(2,)`` or ``(n, 2)``."""
        r = self.to_ref(x)
        return self.eval_ref(r[..., 0], r[..., 1])

    def vertex_values(self) -> np.ndarray:
        c = self.coef
        return np.array([c[0, 0], c[:, 0].sum(), c[0, :].sum()])

    def integrate(self, rule: QuadratureRule | None = None) -> float:
        if rule is None:
            rule = triangle_quadrature(max(self.degree, 1))
        vals = self.eval_ref(rule.ref[:, 0], rule.ref[:, 1])
        return float(self._area * np.dot(rule.weights, vals))

    def __repr__(self):
        return f"PolyOnTriangle(degree={self.degree}, verts={self.verts.tolist()})"


def eval_grad(poly: PolyOnTriangle, point) -> tuple[float, np.ndarray]:
    """Value and Cartesian gradient of ``poly`` at ``point``."""
    r = poly.to_ref(point)
    d1, d2 = poly.deriv_ref()
    g_ref = np.array([d1.eval_ref(*r), d2.eval_ref(*r)])
    return float(poly.eval_ref(*r)), poly._jinv.T @ g_ref


def integrate(poly: PolyOnTriangle, triangle=None) -> float:
    """Integral of ``poly`` over its triangle (``triangle`` must match if given)."""
    if triangle is not None and not np.allclose(np.asarray(triangle, float), poly.verts):
        raise ValueError("polynomial is not defined on the given triangle")
    return poly.integrate()


def divergence(u) -> PolyOnTriangle:
    """Divergence of a vector polynomial given as ``(ux, uy)``."""
    return u[0].grad()[0] + u[1].grad()[1]


def h1_seminorm_sq(u) -> float:
    """``|u|_{H^1(T)}^2`` of a vector polynomial ``(ux, uy)``."""
    total = 0.0
    for comp in u:
        for d in comp.grad():
            total += (d * d).integrate()
    return total


def l2_norm_sq(g: PolyOnTriangle) -> float:
    return (g * g).integrate()


def legendre_power_series(p: int) -> np.ndarray:
    """Power-series coefficients of ``Le_p``."""
    c = np.zeros(p + 1)
    c[p] = 1.0
    return npleg.leg2poly(c)
