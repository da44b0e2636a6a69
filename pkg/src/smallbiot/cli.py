"""Command-line entry point: ``smallbiot {phi,table,classify,distance,simulate}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, lumped
from .dunking import DunkingConfig, TimeStepPolicy, simulate, solve_dunking
from .fem import UNIFORM, make_materials
from .geometry import (NAMED_SHAPES, feature_F, load_shape, measures, named_shape,
                       shape_distance)
from .mesh import generate, refine_uniform
from .sensitivity import default_mesh_size, dictionary, functionals_with_convergence

log = logging.getLogger("smallbiot")

# phi above this makes Bi' = phi Bi materially larger than Bi
PHI_UNRELIABLE = 2.0
FEATURE_UNRELIABLE = 1.0

TABLE_COLUMNS = {
    "2": ["B", "Bi_dunk", "e1_avg", "e1_asymp", "e1_UB"],
    "3": ["B", "Bi_dunk", "e2P_avg", "e2P_asymp"],
    "4": ["B", "Bi_dunk", "e_delta_rel", "C1_Bi", "e_delta_rel_estimate"],
}


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def parse_shape(text: str):
    if os.path.exists(text):
        return load_shape(text)
    return named_shape(text)


def parse_floats(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def load_materials(path, mesh):
    """Per-region materials from JSON.

    Format: {"sigma": {"0": .., "1": ..}, "kappa": {...},
             "regions": [{"id": 1, "box": [x0, y0, x1, y1]}, ...]}
    Elements whose centroid lies in a box get that id (later boxes win);
    the rest are region 0. Raw values are normalised.
    """
    with open(path) as fh:
        spec = json.load(fh)
    c = mesh.centroids()
    reg = np.zeros(mesh.n_elements, dtype=int)
    for item in spec.get("regions", []):
        box = item["box"]
        if mesh.dim == 1:
            inside = (c[:, 0] >= box[0]) & (c[:, 0] <= box[1])
        else:
            inside = ((c[:, 0] >= box[0]) & (c[:, 0] <= box[2])
                      & (c[:, 1] >= box[1]) & (c[:, 1] <= box[3]))
        reg[inside] = int(item["id"])
    mesh = mesh.with_regions(reg)
    vols = mesh.region_volumes()
    sigma = {int(k): float(v) for k, v in spec["sigma"].items()}
    kappa = {int(k): float(v) for k, v in spec["kappa"].items()}
    sigma = {r: sigma[r] for r in vols}
    kappa = {r: kappa[r] for r in vols}
    return mesh, make_materials(sigma, kappa, vols)


def build_mesh(shape, levels: int, h: float | None = None):
    mesh = generate(shape, h or default_mesh_size(shape))
    for _ in range(levels - 1):
        mesh = refine_uniform(mesh)
    return mesh


def emit(rows: list[dict], columns: list[str], fmt: str, out, meta: dict | None = None) -> None:
    if fmt == "json":
        if meta:
            payload = {"meta": meta, "rows": rows}
        else:
            payload = rows[0] if len(rows) == 1 else rows
        out.write(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
        return
    if meta:
        out.write("# " + json.dumps(_jsonable(meta), sort_keys=True) + "\n")
    if fmt == "dat":
        out.write("# " + " ".join(columns) + "\n")
        for r in rows:
            out.write(" ".join(_fmt(r.get(c)) for c in columns) + "\n")
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10e}"
    return str(v)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_phi(args, out) -> dict:
    if args.dict:
        rec = dict(dictionary(args.dict, args.param))
        rec["source"] = "closed form"
        rec["shape"] = args.dict
    else:
        shape = parse_shape(args.shape)
        if args.materials:
            mesh, mats = load_materials(args.materials, generate(shape, default_mesh_size(shape)))
            res = functionals_with_convergence(mesh, mats, args.order, args.levels)
        else:
            res = functionals_with_convergence(shape, UNIFORM, args.order, args.levels)
        rec = res.record(shape=shape.name or args.shape)
    emit([rec], list(rec), "json", out)
    return rec


def _table_row(job):
    shape, B, levels, order, scheme, t0_frac, tfinal_frac = job
    if B == 0:
        # insulated body: u = 1, every lumped model is exact
        return {"B": 0.0, "Bi_dunk": 0.0, "e1_avg": 0.0, "e1_asymp": 0.0, "e1_UB": 0.0,
                "e2P_avg": 0.0, "e2P_asymp": 0.0, "e_delta_rel": 0.0, "C1_Bi": 0.0,
                "e_delta_rel_estimate": 0.0}
    mesh = build_mesh(shape, levels)
    r = simulate(mesh, B, UNIFORM, order, scheme, tfinal_frac=tfinal_frac, t0_frac=t0_frac)
    est, err, inp = r["estimators"], r["errors"], r["inputs"]
    return {"B": B, "Bi_dunk": inp.bi, "e1_avg": err["e1_avg"], "e1_asymp": est["e1_asymp"],
            "e1_UB": est["e1_UB"], "e2P_avg": err["e2P_avg"], "e2P_asymp": est["e2P_asymp"],
            "e_delta_rel": err["e_delta_rel"], "C1_Bi": est["e_delta_longtime"],
            "e_delta_rel_estimate": est["e_delta_rel_estimate"], "phi": inp.phi}


def cmd_table(args, out) -> list[dict]:
    shape = parse_shape(args.shape)
    jobs = [(shape, B, args.levels, args.order, args.scheme, args.t0_frac, args.tfinal_frac)
            for B in args.B]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_table_row, jobs))
    else:
        rows = [_table_row(j) for j in jobs]
    meta = {"version": __version__, "table": args.which, "shape": shape.name,
            "levels": args.levels, "order": args.order, "scheme": args.scheme,
            "t0_frac": args.t0_frac, "tfinal_frac": args.tfinal_frac,
            "dt_policy": vars_policy(TimeStepPolicy())}
    emit(rows, TABLE_COLUMNS[args.which], args.format, out, meta)
    return rows


def vars_policy(p: TimeStepPolicy) -> dict:
    return {"kind": p.kind, "dt0": p.dt0, "growth": p.growth, "n_graded": p.n_graded,
            "cap": p.cap, "startup_be": p.startup_be, "unit": "tau1"}


def classify(shape, biots=(), levels: int = 4, order: int = 2) -> dict:
    F = feature_F(shape)
    res = functionals_with_convergence(shape, UNIFORM, order, levels)
    if F > FEATURE_UNRELIABLE:
        verdict, reason = "lumped criterion unreliable", f"feature F = {F:.3g} > {FEATURE_UNRELIABLE:g}"
    elif res.phi > PHI_UNRELIABLE:
        verdict, reason = "lumped criterion unreliable", f"phi = {res.phi:.3g} > {PHI_UNRELIABLE:g}"
    else:
        verdict, reason = "textbook criterion adequate", f"phi = {res.phi:.3g} <= {PHI_UNRELIABLE:g}"
    g = measures(shape).gamma
    return {"shape": shape.name, "F": F, "phi": res.phi, "discretization_estimate": res.discretization_estimate,
            "Bi_dunk_prime": {repr(B): res.phi * B / g for B in biots},
            "Bi_dunk": {repr(B): B / g for B in biots}, "verdict": verdict, "reason": reason}


def cmd_classify(args, out) -> dict:
    rec = classify(parse_shape(args.shape), args.B or (), args.levels, args.order)
    emit([rec], list(rec), "json", out)
    return rec


def cmd_distance(args, out) -> dict:
    a, b = parse_shape(args.shape), parse_shape(args.other)
    c1, c2 = args.weights
    D = shape_distance(a, b, c1, c2)
    pa = functionals_with_convergence(a, UNIFORM, args.order, args.levels)
    pb = functionals_with_convergence(b, UNIFORM, args.order, args.levels)
    rec = {"shape_a": a.name, "shape_b": b.name, "D": D, "phi_a": pa.phi, "phi_b": pb.phi,
           "delta_phi": abs(pa.phi - pb.phi),
           "discretization_estimates": [pa.discretization_estimate, pb.discretization_estimate]}
    emit([rec], list(rec), "json", out)
    return rec


def cmd_simulate(args, out) -> dict:
    shape = parse_shape(args.shape)
    if len(args.B) != 1:
        raise SystemExit("simulate takes a single --B value")
    B = args.B[0]
    mesh = build_mesh(shape, args.levels)
    mats = UNIFORM
    if args.materials:
        mesh, mats = load_materials(args.materials, mesh)
    if B == 0:
        # tau1 is infinite: --tfinal-frac is read as an absolute horizon
        trace = solve_dunking(mesh, mats, DunkingConfig(0.0, t_final=args.tfinal_frac), args.order)
        overlay = {"u1_avg": np.ones_like(trace.times), "u2P_avg": np.ones_like(trace.times)}
        summary = {"B": 0.0}
    else:
        r = simulate(mesh, B, mats, args.order, args.scheme,
                     tfinal_frac=args.tfinal_frac, t0_frac=args.t0_frac)
        trace, inp = r["trace"], r["inputs"]
        overlay = {"u1_avg": lumped.u1_avg(trace.times, B, inp.gamma),
                   "u2P_avg": lumped.u2p_avg(trace.times, inp)}
        summary = {"B": B, "phi": inp.phi, "u2P_delta": r["u2P_delta"],
                   **{k: v for k, v in r["errors"].items() if not k.endswith("_running")},
                   **r["estimators"]}
    meta = {"version": __version__, "shape": shape.name, "levels": args.levels, "order": args.order,
            "scheme": args.scheme, "dt_policy": vars_policy(TimeStepPolicy()), "seed": args.seed,
            "energy_residual": trace.energy_residual, **trace.meta, **summary}
    cols = ["t", "u_avg", "u_boundary_avg", "u_delta", "u1_avg", "u2P_avg"]
    data = {"t": trace.times, "u_avg": trace.u_avg, "u_boundary_avg": trace.u_boundary_avg,
            "u_delta": trace.u_delta, **overlay}
    rows = [{c: float(data[c][i]) for c in cols} for i in range(len(trace.times))]
    emit(rows, cols, args.format, out, meta)
    return summary


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _weights(text: str):
    vals = parse_floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("--weights takes c1,c2")
    return tuple(vals)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smallbiot", description="Small-Biot lumped models and their errors")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, levels):
        sp.add_argument("--shape", default="sart2",
                        help=f"shape file or named shape ({', '.join(NAMED_SHAPES)}), e.g. finned:8,0.2")
        sp.add_argument("--levels", type=int, default=levels, help="number of meshes (coarse + refinements)")
        sp.add_argument("--order", type=int, choices=(1, 2), default=2)
        sp.add_argument("--out", help="output file (default stdout)")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("phi", help="phi, gamma*chi, gamma^2*upsilon for a shape")
    common(sp, 4)
    sp.add_argument("--dict", help="closed-form dictionary entry instead of a FE solve")
    sp.add_argument("--param", type=parse_floats, help="dictionary parameter(s)")
    sp.add_argument("--materials", help="JSON material file")
    sp.set_defaults(func=cmd_phi)

    def transient(sp):
        sp.add_argument("--B", type=parse_floats, required=True, help="Biot number(s), comma separated")
        sp.add_argument("--scheme", choices=("cn", "be"), default="cn")
        sp.add_argument("--t0-frac", type=float, default=0.2, help="t0 as a fraction of tau1")
        sp.add_argument("--tfinal-frac", type=float, default=2.0, help="t_final as a fraction of tau1")
        sp.add_argument("--format", choices=("csv", "json", "dat"), default="csv")

    sp = sub.add_parser("table", help="true errors against estimators over a B sweep")
    sp.add_argument("which", choices=sorted(TABLE_COLUMNS))
    common(sp, 2)
    transient(sp)
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sp.set_defaults(func=cmd_table)

    sp = sub.add_parser("classify", help="feature F, phi and a reliability verdict")
    common(sp, 4)
    sp.add_argument("--B", type=parse_floats, help="Biot number(s) for Bi'")
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("distance", help="shape distance and the two phi values")
    common(sp, 4)
    sp.add_argument("--other", required=True, help="second shape")
    sp.add_argument("--weights", type=_weights, default=(0.5, 0.5))
    sp.set_defaults(func=cmd_distance)

    sp = sub.add_parser("simulate", help="transient trace with lumped overlay")
    common(sp, 2)
    transient(sp)
    sp.add_argument("--materials", help="JSON material file")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.random.seed(args.seed)
    try:
        if args.out:
            buf = io.StringIO()
            args.func(args, buf)
            with open(args.out, "w") as fh:
                fh.write(buf.getvalue())
        else:
            args.func(args, sys.stdout)
    except (ValueError, OSError) as exc:
        print(f"smallbiot: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
