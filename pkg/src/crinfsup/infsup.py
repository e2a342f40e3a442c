"""Discrete inf-sup constants and refinement sweeps."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla

from . import linalg
from .crspace import (
    MAX_VELOCITY_DOFS,
    OperatorSet,
    RawSpace,
    VelocitySpace,
    assemble_operators,
    cr_space,
)
from .divinverse import minimal_cr_space
from .mesh import Triangulation, check_admissible, refine_uniform

__all__ = [
    "InfSupResult",
    "SchurData",
    "schur_complement",
    "inf_sup_constant",
    "sup_ratio",
    "sampled_inf",
    "refinement_sweep",
    "sweep_table",
    "sweep_csv",
    "SWEEP_COLUMNS",
    "MAX_LEVELS",
]

MAX_LEVELS = 5
SWEEP_COLUMNS = ("level", "nT", "hmax", "min_angle", "dof_v", "dof_p", "beta", "residual")
DEFAULT_EPS = math.radians(20.0)
DEFAULT_M = 1


@dataclass
class InfSupResult:
    beta: float
    n_triangles: int
    min_angle: float
    h_max: float
    p: int
    space: str  # "full" or "minimal"
    dof_v: int
    dof_p: int
    residual: float  # relative eigen-residual
    deflation_residual: float  # |S 1| / |S|
    admissible: bool
    level: int = 1
    seconds: float = 0.0

    def row(self) -> dict:
        return {
            "level": self.level,
            "nT": self.n_triangles,
            "hmax": self.h_max,
            "min_angle": self.min_angle,
            "dof_v": self.dof_v,
            "dof_p": self.dof_p,
            "beta": self.beta,
            "residual": self.residual,
        }

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class SchurData:
    ops: OperatorSet
    S: np.ndarray  # Bdiv K^-1 Bdiv^T
    chol: np.ndarray  # lower Cholesky factor of K


def schur_complement(ops: OperatorSet) -> SchurData:
    try:
        L = np.linalg.cholesky(ops.K)
    except np.linalg.LinAlgError as exc:
        raise linalg.LinAlgFailure("velocity Gram matrix is not positive definite; "
                                   "the velocity space is broken") from exc
    X = sla.solve_triangular(L, ops.Bdiv.T, lower=True)
    S = X.T @ X
    return SchurData(ops, 0.5 * (S + S.T), L)


def _space(tri: Triangulation, p: int, space) -> VelocitySpace:
    if isinstance(space, VelocitySpace):
        return space
    if space == "full":
        return cr_space(tri, p)
    if space == "minimal":
        return minimal_cr_space(tri, p)
    raise ValueError(f"unknown space {space!r}")


def inf_sup_constant(tri: Triangulation, p: int, space="full", *,
                     eps: float = DEFAULT_EPS, M: int = DEFAULT_M) -> InfSupResult:
    """Smallest nonzero singular value of the divergence in the natural norms.

    ``beta**2`` is the smallest eigenvalue of ``Bdiv K^-1 Bdiv^T`` against the
    pressure mass matrix on the complement of the constants.  Inadmissible
    meshes are computed anyway and flagged.
    """
    t0 = time.perf_counter()
    V = _space(tri, p, space)
    ops = assemble_operators(tri, p, V)
    sd = schur_complement(ops)
    vals, X = linalg.deflated_generalized_eigh(sd.S, ops.Mp, ops.constant)
    lam, x = float(vals[0]), X[:, 0]
    normS = max(np.linalg.norm(sd.S, 2), np.finfo(float).tiny)
    res = float(np.linalg.norm(sd.S @ x - lam * (ops.Mp @ x)) / (normS * np.linalg.norm(x)))
    defl = float(np.linalg.norm(sd.S @ ops.constant) / (normS * np.linalg.norm(ops.constant)))
    adm = check_admissible(tri, eps, M)
    return InfSupResult(
        beta=math.sqrt(max(lam, 0.0)),
        n_triangles=tri.n_triangles,
        min_angle=tri.min_angle(),
        h_max=tri.h_max(),
        p=p,
        space=space if isinstance(space, str) else V.kind,
        dof_v=V.dim,
        dof_p=ops.n_pressure,
        residual=res,
        deflation_residual=defl,
        admissible=adm.admissible,
        seconds=time.perf_counter() - t0,
    )


def sup_ratio(sd: SchurData, q) -> float:
    """``sup_v (q, div v) / (|q| |||v|||)`` for a pressure ``q`` orthogonal to constants."""
    q = np.asarray(q, float)
    return math.sqrt(max(q @ sd.S @ q, 0.0) / (q @ sd.ops.Mp @ q))


def sampled_inf(tri: Triangulation, p: int, n_samples: int = 200, seed: int = 0,
                space="full") -> tuple[float, np.ndarray]:
    """Minimum of :func:`sup_ratio` over random mean-zero pressures (an upper bound on beta)."""
    ops = assemble_operators(tri, p, _space(tri, p, space))
    sd = schur_complement(ops)
    rng = np.random.default_rng(seed)
    ratios = np.empty(n_samples)
    c, mc = ops.constant, ops.mean
    for k in range(n_samples):
        q = rng.standard_normal(ops.n_pressure)
        q -= c * (mc @ q) / (mc @ c)
        ratios[k] = sup_ratio(sd, q)
    return float(ratios.min()), ratios


def refinement_sweep(tri0: Triangulation, p: int, levels: int, space_kind="full", *,
                     eps: float = DEFAULT_EPS, M: int = DEFAULT_M) -> list[InfSupResult]:
    """``beta`` on ``tri0`` (level 1) and ``levels - 1`` uniform refinements."""
    if not 1 <= levels <= MAX_LEVELS:
        raise ValueError(f"levels must lie in 1..{MAX_LEVELS}")
    meshes = [tri0]
    for _ in range(levels - 1):
        meshes.append(refine_uniform(meshes[-1]))
    raw = RawSpace(meshes[-1], p).dim
    if raw > MAX_VELOCITY_DOFS:
        raise MemoryError(f"level {levels} needs {raw} velocity dofs, above the limit of "
                          f"{MAX_VELOCITY_DOFS}; reduce --levels or p")
    out = []
    for level, tri in enumerate(meshes, start=1):
        r = inf_sup_constant(tri, p, space_kind, eps=eps, M=M)
        r.level = level
        out.append(r)
    return out


def sweep_table(results: list[InfSupResult]) -> list[dict]:
    return [r.row() for r in results]


def sweep_csv(results: list[InfSupResult]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(sweep_table(results))
    return buf.getvalue()
