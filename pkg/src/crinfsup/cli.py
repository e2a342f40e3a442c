"""Command-line verification reports (JSON)."""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, linalg
from .divinverse import (
    SurjectivityFailure,
    bubble_right_inverse,
    edge_pair_right_inverse,
    patch_right_inverse,
    project_out_lambda,
    random_pressure,
)
from .infsup import refinement_sweep, sweep_csv
from .mesh import (
    SEED_MESHES,
    MeshError,
    check_admissible,
    extract_patch,
    crisscross_square,
    patch_geometry,
    random_patch,
    read_mesh,
    regular_patch,
    write_mesh,
)
from .patchmat import derived_matrices, assemble_M_numeric, verify_patch_lemmas
from .poly import PolyOnTriangle

SCHEMA = "crinfsup.report/1"


class UsageError(Exception):
    """Bad arguments or unreadable inputs (exit code 2)."""


def record(name, expected, observed, tolerance=None, passed=None) -> dict:
    if passed is None:
        if tolerance is None:
            passed = observed == expected
        else:
            passed = abs(observed - expected) <= tolerance
    return {"name": name, "expected": expected, "observed": observed,
            "tolerance": tolerance, "pass": bool(passed)}


def _bound(name, observed, limit, upper=True) -> dict:
    ok = observed <= limit if upper else observed >= limit
    rel = "<=" if upper else ">="
    return {"name": name, "expected": f"{rel} {limit:g}", "observed": observed,
            "tolerance": limit, "pass": bool(ok)}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


# ---------------------------------------------------------------------------
# subcommands; each returns (records, extra payload)


def cmd_lemmas(args):
    records, reports = [], []
    for k in range(args.patches):
        seed = args.seed + k
        m = int(np.random.default_rng(seed).integers(3, 13))
        patch = random_patch(m, math.radians(args.min_angle), seed=seed)
        rep = verify_patch_lemmas(patch, args.p)
        d = rep.to_json()
        d["seed"] = seed
        reports.append(d)
        records.append(record(f"patch[{k}].dim_ker_A", 1, rep.dim_ker_A))
        records.append(record(f"patch[{k}].dim_ker_B", m + 1 + rep.sigma, rep.dim_ker_B))
        records.append(record(f"patch[{k}].all_checks", True, rep.passed))
    return records, {"patches": reports}


def _geometry_patch(args):
    if args.geometry == "equilateral":
        return regular_patch(args.m)
    if args.geometry == "crisscross":
        if args.m != 4:
            raise UsageError("crisscross geometry has m = 4")
        tri = crisscross_square()
        return extract_patch(tri, int(tri.interior_vertices[0]))
    return random_patch(args.m, math.radians(args.min_angle), seed=args.seed)


def cmd_patch(args):
    patch = _geometry_patch(args)
    geom = patch_geometry(patch)
    pm = derived_matrices(assemble_M_numeric(patch, args.p), geom)
    rep = verify_patch_lemmas(patch, args.p)
    m = patch.m
    result = rep.to_json()
    result.update({
        "M": pm.M, "A": pm.A, "B": pm.B,
        "kernel_M": linalg.nullspace(pm.M), "kernel_A": linalg.nullspace(pm.A),
        "kernel_B": linalg.nullspace(pm.B),
    })
    records = [
        record("rank_M", 4 * m - 1, rep.rank_M),
        record("dim_ker_A", 1, rep.dim_ker_A),
        record("dim_ker_B", m + 1 + geom.sigma, rep.dim_ker_B),
        record("all_checks", True, rep.passed),
    ]
    return records, {"result": result}


def _random_triangle(rng):
    while True:
        T = rng.uniform(-1, 1, (3, 2))
        ang = _angles(T)
        if ang.min() > math.radians(20):
            return T


def _angles(T):
    out = []
    for i in range(3):
        a, b = T[(i + 1) % 3] - T[i], T[(i + 2) % 3] - T[i]
        out.append(math.acos(np.clip(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)), -1, 1)))
    return np.array(out)


def cmd_rightinv(args):
    rng = np.random.default_rng(args.seed)
    p, records = args.p, []
    for k in range(args.samples):
        if args.mode == "bubble":
            T = _random_triangle(rng)
            g = PolyOnTriangle.from_coefficients(rng.standard_normal(p * (p + 1) // 2), p - 1, T)
            g = project_out_lambda(g, p - 1)
            sol = bubble_right_inverse(T, p, g)
            records.append(_bound(f"bubble[{k}].residual", sol.relative_residual, 1e-10))
        elif args.mode == "edge":
            T = _random_triangle(rng)
            # reflect the third vertex across the shared edge and perturb
            a, b = T[0], T[2]
            d = (b - a) / np.linalg.norm(b - a)
            q = T[1] - a
            refl = a + 2 * (q @ d) * d - q
            Tm = np.array([a, b, refl + 0.1 * rng.standard_normal(2)])
            g = PolyOnTriangle.from_coefficients(rng.standard_normal(p * (p + 1) // 2), p - 1, T)
            v = edge_pair_right_inverse(T, Tm, p, g)
            records.append(_bound(f"edge[{k}].residual", v.residual, 1e-10))
            records.append(_bound(f"edge[{k}].jump_moment", v.info["jump_moment"], 1e-11))
            records.append(_bound(f"edge[{k}].cond", v.info["cond_vandermonde"], 1e8))
        else:
            seed = args.seed + k
            m = int(np.random.default_rng(seed).integers(3, 13))
            patch = random_patch(m, math.radians(20), seed=seed)
            g = random_pressure(patch, p - 1, rng)
            v = patch_right_inverse(patch, p, g)
            records.append(_bound(f"patch[{k}].residual", v.residual, 1e-9))
            records.append(record(f"patch[{k}].ratio", None, v.ratio, passed=math.isfinite(v.ratio)))
    return records, {}


def cmd_infsup(args):
    path = Path(args.mesh)
    if not path.is_file():
        raise UsageError(f"mesh file not found: {path}")
    try:
        tri = read_mesh(path)
    except (ValueError, KeyError, MeshError) as exc:
        raise UsageError(f"cannot read mesh {path}: {exc}") from exc
    kind = "minimal" if args.minimal else "full"
    results = refinement_sweep(tri, args.p, args.levels, kind)
    records = []
    final = results[-1].beta
    for r in results:
        records.append(_bound(f"level[{r.level}].residual", r.residual, 1e-8))
        records.append(_bound(f"level[{r.level}].beta_floor", r.beta, 0.5 * results[0].beta, upper=False))
        records.append(_bound(f"level[{r.level}].beta_band", abs(r.beta - final) / final, 0.25))
    payload = {"levels": [r.to_json() for r in results], "space": kind}
    if args.csv:
        Path(args.csv).write_text(sweep_csv(results))
        payload["csv"] = str(args.csv)
    return records, payload


def cmd_mesh(args):
    records, meshes = [], {}
    out_dir = Path(args.write) if args.write else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    names = [args.name] if args.name else list(SEED_MESHES)
    for name in names:
        tri = SEED_MESHES[name]()
        rep = check_admissible(tri, math.radians(args.min_angle), args.M)
        meshes[name] = {"n_triangles": tri.n_triangles, "n_vertices": tri.n_vertices,
                        **rep.to_json()}
        if out_dir:
            write_mesh(tri, out_dir / f"{name}.json")
            meshes[name]["file"] = str(out_dir / f"{name}.json")
        records.append(record(f"{name}.admissible", True, rep.admissible))
    return records, {"meshes": meshes}


COMMANDS = {"lemmas": cmd_lemmas, "patch": cmd_patch, "rightinv": cmd_rightinv,
            "infsup": cmd_infsup, "mesh": cmd_mesh}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crinfsup", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="write the JSON report here instead of stdout")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("lemmas", help="kernel lemmas on random vertex patches")
    common(sp)
    sp.add_argument("--patches", type=int, default=10)
    sp.add_argument("--p", type=int, default=3, choices=(3, 5, 7))
    sp.add_argument("--min-angle", type=float, default=20.0, help="degrees")

    sp = sub.add_parser("patch", help="patch matrices and their kernels")
    common(sp)
    sp.add_argument("--m", type=int, default=6)
    sp.add_argument("--geometry", choices=("equilateral", "crisscross", "random"), default="equilateral")
    sp.add_argument("--p", type=int, default=3, choices=(3, 5, 7))
    sp.add_argument("--min-angle", type=float, default=20.0, help="degrees")

    sp = sub.add_parser("rightinv", help="right-inverses of the divergence")
    common(sp)
    sp.add_argument("--p", type=int, default=3)
    sp.add_argument("--mode", choices=("bubble", "edge", "patch"), default="bubble")
    sp.add_argument("--samples", type=int, default=10)

    sp = sub.add_parser("infsup", help="inf-sup constants under uniform refinement")
    common(sp)
    sp.add_argument("--mesh", required=True, help="mesh JSON file")
    sp.add_argument("--p", type=int, default=1)
    sp.add_argument("--levels", type=int, default=3)
    sp.add_argument("--minimal", action="store_true", help="use the minimal velocity space")
    sp.add_argument("--csv", help="also write the sweep table as CSV")

    sp = sub.add_parser("mesh", help="seed meshes and admissibility")
    common(sp)
    sp.add_argument("--name", choices=tuple(SEED_MESHES))
    sp.add_argument("--write", metavar="DIR", help="write seed meshes as JSON into DIR")
    sp.add_argument("--min-angle", type=float, default=20.0, help="degrees")
    sp.add_argument("--M", type=int, default=1)
    return ap


def _check_args(args):
    positive = {"patches": 1, "samples": 1, "levels": 1, "m": 3}
    for name, low in positive.items():
        if getattr(args, name, low) < low:
            raise UsageError(f"--{name} must be >= {low}")
    if args.command == "rightinv":
        low = 4 if args.mode == "edge" else 3
        if args.p < low or (args.mode == "patch" and args.p % 2 == 0):
            raise UsageError(f"--mode {args.mode} needs {'p >= 4' if low == 4 else 'odd p >= 3'}")
    if args.command == "infsup" and args.minimal and (args.p < 3 or args.p % 2 == 0):
        raise UsageError("--minimal needs odd p >= 3")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    t0 = time.perf_counter()
    try:
        _check_args(args)
        records, payload = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"crinfsup {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (MeshError, ValueError, MemoryError) as exc:
        print(f"crinfsup {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (SurjectivityFailure, linalg.LinAlgFailure) as exc:
        records = [record("run", "completed", f"failed: {exc}", passed=False)]
        payload = {}
    report = {
        "schema": SCHEMA,
        "command": ["crinfsup", *argv],
        "seed": getattr(args, "seed", None),
        "records": records,
        "pass": all(r["pass"] for r in records),
        "wall_time": time.perf_counter() - t0,
        **payload,
    }
    text = json.dumps(_jsonable(report), indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0 if report["pass"] else 1
