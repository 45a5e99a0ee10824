"""Command-line front end: load metric and problem files, run the demo and
verification suites, write JSON reports plus CSV plot data.

Exit status is 0 only when the report contains no violation records; input
problems exit 1, verification failures exit 2.  Reports are byte-stable for
a fixed seed and configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import alpinist as alp_mod
from . import chart as ch
from . import constructor as co
from . import expr as ex
from . import flatzoomer as fz
from . import probes
from . import radii as rd

__all__ = ["main", "run"]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)


def _write_report(outdir, name, report):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, f"{name}.json")
    with open(path, "w") as fh:
        fh.write(json.dumps(_jsonable(report), sort_keys=True, indent=2))
        fh.write("\n")
    return path


def _write_csv(outdir, name, header, rows):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, f"{name}.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.12g}" if isinstance(v, float) else v
                             for v in row])
    return path


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise SystemExit(f"error: input file not found: {path}")
    except json.JSONDecodeError as err:
        raise SystemExit(
            f"error: malformed JSON in {path} at line {err.lineno}, "
            f"column {err.colno}: {err.msg}")


def _load_metric(path):
    data = _load_json(path)
    data = data.get("metric", data)
    try:
        return ch.MetricField.from_dict(data)
    except ex.ParseError as err:
        raise SystemExit(
            f"error: bad component expression in {path} at position "
            f"{err.position}: {err}")
    except (KeyError, ValueError, TypeError) as err:
        raise SystemExit(f"error: bad metric file {path}: {err}")


# ---------------------------------------------------------------------------
# subcommands

def _cmd_curvature(args):
    g = _load_metric(args.input)
    rng = np.random.default_rng(args.seed)
    pts = g.interior_samples(max(args.grid, 16), rng)
    riem = ch.riemann(g, pts)
    _, norms = ch.inner_and_norm(riem, g, x=pts)
    gam = ch.christoffels(g, pts)
    report = {
        "input": os.path.basename(args.input),
        "samples": int(pts.shape[0]),
        "riemann_norm": {"min": float(np.min(norms)),
                         "max": float(np.max(norms)),
                         "mean": float(np.mean(norms))},
        "christoffel_sup": float(np.max(np.abs(gam))),
        "violations": [],
    }
    rows = [tuple(p) + (float(n),) for p, n in zip(pts, norms)]
    csv_path = _write_csv(args.out, "curvature", g.var_names + ["riem_norm"],
                          rows)
    return report, csv_path


def _tensor_rel_err(a, b):
    scale = np.maximum(np.sqrt(np.sum(b * b, axis=tuple(range(1, b.ndim)))),
                       1e-30)
    diff = np.sqrt(np.sum((a - b) ** 2, axis=tuple(range(1, a.ndim))))
    return diff / scale


def _cmd_conformal_check(args):
    if args.input:
        g = _load_metric(args.input)
    else:
        # compact window keeps e^{2u} well-conditioned for polynomial probes
        g = probes.hyperbolic_half_plane(domain=[(-2.0, 2.0), (0.5, 3.0)])
    tol = args.tol if args.tol is not None else 1e-7
    rng = np.random.default_rng(args.seed)
    pts = g.interior_samples(max(args.grid, 16), rng)
    violations = []
    residual_rows = []
    for trial in range(5):
        u = probes.random_factor(g.var_names, rng)
        gu = ch.conformal_rescale(g, u)
        direct = ch.riemann(gu, pts)
        closed = ch.conformal_riemann_closed_form(g, u, pts)
        rel = _tensor_rel_err(closed, direct)
        for i, r in enumerate(rel):
            residual_rows.append((trial, "riemann", i, float(r)))
            if r > tol:
                violations.append({"check": "riemann", "trial": trial,
                                   "point": [float(v) for v in pts[i]],
                                   "rel_err": float(r)})
        if g.dim >= 2:
            fol = ch.FoliationSpec(g.dim - 1)
            direct_ff = ch.second_fundamental_form(gu, fol, pts)
            closed_ff = ch.conformal_sff_closed_form(g, fol, u, pts)
            rel = _tensor_rel_err(closed_ff, direct_ff)
            for i, r in enumerate(rel):
                residual_rows.append((trial, "sff", i, float(r)))
                if r > tol:
                    violations.append({"check": "sff", "trial": trial,
                                       "point": [float(v) for v in pts[i]],
                                       "rel_err": float(r)})
    report = {
        "metric": os.path.basename(args.input) if args.input
        else "hyperbolic-half-plane",
        "trials": 5,
        "points": int(pts.shape[0]),
        "tolerance": tol,
        "max_rel_err": max((r[3] for r in residual_rows), default=0.0),
        "violations": violations,
    }
    csv_path = _write_csv(args.out, "conformal-check",
                          ["trial", "check", "point_index", "rel_err"],
                          residual_rows)
    return report, csv_path


def _cmd_alpinist(args):
    tol = args.tol if args.tol is not None else 1e-6
    alp = alp_mod.make_alpinist(args.a, args.k)
    n_max = max(args.grid, 50)
    reports, overall = alp_mod.g_bound(alp, n_max, grid=4000)
    early = max(r.sup for r in reports[:max(1, n_max // 4)])
    violations = []
    if overall > 1.001 * early:
        violations.append({"check": "stabilization", "sup": overall,
                           "early_sup": early})
    # endpoint flatness: climbs start and end with zero derivatives
    t_edge = np.array([1e-6, 1.0 - 1e-6])
    ders = alp.phi_derivatives(min(10, n_max), t_edge, min(alp.k + 1,
                                                           alp_mod.MAX_PHI_ORDER))
    edge_resid = float(max(np.max(np.abs(d)) for d in ders[1:])) \
        if len(ders) > 1 else 0.0
    if edge_resid > tol:
        violations.append({"check": "endpoint-flatness",
                           "residual": edge_resid})
    rows = [(r.n, r.sup, r.argmax_t) for r in reports]
    report = {
        "a": args.a, "k": args.k, "n_max": n_max,
        "sup": overall, "early_sup": early,
        "endpoint_residual": edge_resid,
        "violations": violations,
    }
    csv_path = _write_csv(args.out, "alpinist", ["n", "sup", "argmax_t"], rows)
    if args.naive:
        naive_rows = [(n, alp_mod.naive_counterexample(n))
                      for n in (100, 1000, 10_000, 100_000, 1_000_000)]
        _write_csv(args.out, "alpinist-naive", ["n", "value"], naive_rows)
        report["naive"] = {str(n): v for n, v in naive_rows}
    return report, csv_path


def _cmd_flatzoom(args):
    data = _load_json(args.input)
    g = ch.MetricField.from_dict(data["metric"])
    bound = fz.FlatzoomerBound.from_dict(data["certificate"])
    order = int(data.get("order", 0))
    phi = fz.make_curvature_functional(g, g, order)
    factors = [ch.ConformalFactorField(ex.parse(src, g.var_names),
                                       g.var_names)
               for src in data["factors"]]
    rng = np.random.default_rng(args.seed)
    pts = g.interior_samples(max(args.grid, 16), rng)
    result = fz.verify_flatzoomer_bound(phi, bound, factors, pts)
    rows = [(v["u_index"], " ".join(f"{c:.9g}" for c in v["point"]),
             v["lhs"], v["rhs"]) for v in result["violations"]]
    report = {
        "input": os.path.basename(args.input),
        "checked": result["checked"],
        "violations": result["violations"],
    }
    csv_path = _write_csv(args.out, "flatzoom",
                          ["factor", "point", "lhs", "rhs"], rows)
    return report, csv_path


def _cmd_construct(args):
    data = _load_json(args.input)
    g = ch.MetricField.from_dict(data["metric"])
    if g.dim != 2:
        raise SystemExit("error: construct expects a 2D rotationally "
                         "symmetric metric chart")
    bound = fz.FlatzoomerBound.from_dict(data["certificate"])
    eps = float(data.get("eps", 0.01))
    lift = co.RadialLift()
    phi = fz.make_curvature_functional(g, g, 0)
    exhaustion = fz.ExhaustionModel(data.get("radii"))
    try:
        u, factor, ledger, result = co.flatzoom_all(
            [(phi, bound, eps)], ex.parse(str(data.get("w", "0")), ["x"]),
            exhaustion, lift, args.horizon, grid=max(args.grid, 64))
        violations = []
    except co.VerificationError as err:
        u = factor = ledger = None
        result = {"passed": False}
        violations = [{"check": "construction", "witness":
                       _jsonable(err.witness), "message": str(err)}]
    report = {
        "input": os.path.basename(args.input),
        "eps": eps,
        "horizon": args.horizon,
        "result": _jsonable(result),
        "ledger": ledger.to_dict() if ledger else None,
        "violations": violations,
    }
    rows = []
    if u is not None:
        radii = np.linspace(0.0, float(args.horizon), 512)
        vals = u.derivatives(radii, 1)
        rows = list(zip(radii.tolist(), vals[0].tolist(), vals[1].tolist()))
    csv_path = _write_csv(args.out, "construct", ["r", "u", "du"], rows)
    return report, csv_path


def _cmd_od_solve(args):
    data = _load_json(args.input)
    try:
        problem = co.ODProblem.from_dict(data)
    except ex.ParseError as err:
        raise SystemExit(f"error: bad expression in {args.input} at position "
                         f"{err.position}: {err}")
    except (KeyError, ValueError, TypeError) as err:
        raise SystemExit(f"error: bad problem file {args.input}: {err}")
    if args.horizon != problem.horizon and args.horizon != 12:
        problem = co.ODProblem(problem.eps, problem.alpha, problem.polys,
                               problem.w, args.horizon)
    try:
        mu, u, ledger, result = co.solve_od(problem,
                                            grid=max(args.grid, 1024))
        report = {
            "input": os.path.basename(args.input),
            "mu": mu,
            "b": u.b,
            "margins": result["checks"]["inequalities"],
            "passed": result["passed"],
            "violations": result["failures"],
        }
    except co.VerificationError as err:
        u = None
        report = {
            "input": os.path.basename(args.input),
            "passed": False,
            "violations": [{"check": "od-solve",
                            "witness": _jsonable(err.witness),
                            "message": str(err)}],
        }
    rows = []
    if u is not None:
        xs = np.linspace(0.0, float(problem.horizon), 1024)
        vals = u.derivatives(xs, 1)
        rows = list(zip(xs.tolist(), vals[0].tolist(), vals[1].tolist()))
    csv_path = _write_csv(args.out, "od-solve", ["x", "u", "du"], rows)
    return report, csv_path


def _cmd_radii(args):
    data = _load_json(args.input)
    g = ch.MetricField.from_dict(data["metric"])
    center = [float(v) for v in data["center"]]
    radius = float(data["radius"])
    est = rd.inj_conv_estimate(g, center, radius, seed=args.seed)
    report = {
        "input": os.path.basename(args.input),
        "estimate": est.to_dict(),
        "violations": [],
    }
    csv_path = _write_csv(
        args.out, "radii",
        ["delta", "ell", "r", "inj_bound", "conv_bound"],
        [(est.delta, est.ell if math.isfinite(est.ell) else "inf",
          est.r, est.inj, est.conv)])
    return report, csv_path


def _cmd_lorentz(args):
    src = "0"
    if args.input:
        src = str(_load_json(args.input).get("w", "0"))
    elif args.w:
        src = args.w
    try:
        w = ex.parse(src, ["y"])
    except ex.ParseError as err:
        raise SystemExit(f"error: bad w expression at position "
                         f"{err.position}: {err}")
    result = rd.lorentz_blowup(w)
    violations = []
    if not result["passed"]:
        violations.append({"check": "blow-up bound",
                           "t_star": result["t_star"],
                           "bound": result["bound"]})
    report = {
        "w": src,
        "t_star": result["t_star"],
        "bound": result["bound"],
        "C": result["C"],
        "crossings": result["crossings"],
        "violations": violations,
    }
    traj = result["trajectory"]
    rows = list(zip(traj["t"], traj["y"], traj["dy"]))
    csv_path = _write_csv(args.out, "lorentz", ["t", "gamma2", "dgamma2"],
                          rows)
    return report, csv_path


# ---------------------------------------------------------------------------

_COMMANDS = {
    "curvature": (_cmd_curvature, "tensor report for a metric file"),
    "conformal-check": (_cmd_conformal_check,
                        "conformal transformation identity suite"),
    "alpinist": (_cmd_alpinist, "climb-family bound sweep"),
    "flatzoom": (_cmd_flatzoom, "certificate verification"),
    "construct": (_cmd_construct, "end-to-end flattening construction"),
    "od-solve": (_cmd_od_solve, "differential inequality solver"),
    "radii": (_cmd_radii, "injectivity/convexity radius estimates"),
    "lorentz": (_cmd_lorentz, "incompleteness blow-up demo"),
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="flatzoom",
        description="Flatten metrics by conformal rescaling: verification "
                    "suites, constructions and radius estimates.")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        sub = subs.add_parser(name, help=help_text)
        sub.add_argument("--input", default=None,
                         help="input JSON file (metric / problem)")
        sub.add_argument("--out", default="out",
                         help="output directory for reports and CSV data")
        sub.add_argument("--grid", type=int, default=128,
                         help="grid resolution (min 16)")
        sub.add_argument("--horizon", type=int, default=12,
                         help="exhaustion horizon (min 2)")
        sub.add_argument("--seed", type=int, default=0,
                         help="seed for randomized probes")
        sub.add_argument("--tol", type=float, default=None,
                         help="tolerance override")
        if name == "alpinist":
            sub.add_argument("--a", type=float, default=1.0)
            sub.add_argument("--k", type=int, default=1)
            sub.add_argument("--naive", action="store_true",
                             help="also chart the diverging naive scaling")
        if name == "lorentz":
            sub.add_argument("--w", default=None,
                             help="1-periodic expression in y")
    return parser


def run(args):
    if args.grid < 16:
        raise SystemExit("error: --grid must be at least 16")
    if args.horizon < 2:
        raise SystemExit("error: --horizon must be at least 2")
    needs_input = args.command in ("curvature", "flatzoom", "construct",
                                   "od-solve", "radii")
    if needs_input and not args.input:
        raise SystemExit(f"error: {args.command} requires --input")
    fn, _ = _COMMANDS[args.command]
    report, _ = fn(args)
    _write_report(args.out, args.command, report)
    return 0 if not report["violations"] else 2


def main(argv=None):
    args = _build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
