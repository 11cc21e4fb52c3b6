"""Command line front end.

Exit codes: 0 success, 1 data error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from . import __version__
from ._rng import resolve_seed
from .core import distance_stats
from .inference import chi2_bound_test, permutation_test, rank_test
from .resampling import influence, jackknife, studentize
from .sample import DataError, distance_matrix, load_csv, load_labels
from .sims import TESTS, parse_model, power_study
from .theory import brownian_cov_mc, bvn_curve, constant_C

SCHEMA = "dcov/1"


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _add_data_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--input", required=required, help="CSV file with a header row")
    p.add_argument("--x", required=required, help="x columns: names, indices or ranges like 0-2")
    p.add_argument("--y", required=required, help="y columns")
    p.add_argument("--missing", choices=("drop_rows", "error"), default="drop_rows")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="RNG seed (drawn from OS entropy if omitted)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", choices=("json", "text", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcovkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dcovkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="distance covariance / correlation statistics")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--alpha", type=float, default=1.0)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--affine", action="store_true", help="affine invariant variant")
    group.add_argument("--rank", action="store_true", help="statistics of random-tie-broken ranks")

    p = sub.add_parser("test", help="test of independence")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--method", choices=("permutation", "chi2", "rank"), default="permutation")
    p.add_argument("--replicates", type=int, default=999)
    p.add_argument("--level", type=float, default=0.10)
    p.add_argument("--normalized", action="store_true", help="report n*V^2/T2")

    p = sub.add_parser("rank-test", help="distribution-free rank dCov test")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--level", type=float, default=0.10)
    p.add_argument("--mode", choices=("table", "exact"), default="table")

    p = sub.add_parser("jackknife", help="leave-one-out replicates and studentized values")
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--labels", default=None, help="column holding row labels")

    p = sub.add_parser("theory", help="closed-form curves, constants, Brownian check")
    tsub = p.add_subparsers(dest="what", required=True)
    q = tsub.add_parser("bvn-curve")
    q.add_argument("--rho", type=_floats, default=None, help="comma separated correlations")
    q.add_argument("--points", type=int, default=201)
    _add_common(q)
    q = tsub.add_parser("constants")
    q.add_argument("--d", type=_ints, default=[1], help="comma separated dimensions")
    q.add_argument("--alpha", type=_floats, default=[1.0], help="comma separated exponents")
    _add_common(q)
    q = tsub.add_parser("brownian-check")
    _add_data_args(q, required=False)
    _add_common(q)
    q.add_argument("--draws", type=int, default=100_000)

    p = sub.add_parser("power", help="Monte Carlo power study")
    _add_common(p)
    p.add_argument("--model", required=True, help="bvn:RHO | density | gumbel:THETA, optional +residuals")
    p.add_argument("--sizes", type=_ints, required=True, help="comma separated sample sizes")
    p.add_argument("--runs", type=int, default=2000)
    p.add_argument("--tests", default=",".join(TESTS))
    p.add_argument("--level", type=float, default=0.10)
    p.add_argument("--replicates", type=int, default=199)
    return parser


# -- output -----------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def render(report: dict, fmt: str, table: Optional[list[dict]] = None) -> str:
    report = _clean(report)
    if fmt == "json":
        return json.dumps({"schema": SCHEMA, **report}, indent=2)
    if fmt == "csv":
        rows = table if table is not None else [
            {k: v for k, v in report.items() if not isinstance(v, (list, dict))}
        ]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(_clean(rows))
        return buf.getvalue().rstrip("\n")
    lines = []
    for k, v in report.items():
        if isinstance(v, list) and v and isinstance(v[0], dict):
            lines.append(f"{k}:")
            lines.extend("  " + "  ".join(f"{kk}={vv}" for kk, vv in row.items()) for row in v)
        else:
            lines.append(f"{k}: {v}")
    return "\n".join(lines)


# -- commands ---------------------------------------------------------------

def _load(args):
    x, y, dropped = load_csv(args.input, args.x, args.y, args.missing)
    return x, y, dropped


def cmd_stats(args) -> dict:
    x, y, dropped = _load(args)
    variant = "affine" if args.affine else "rank" if args.rank else "plain"
    seed = resolve_seed(args.seed) if variant == "rank" else args.seed
    if variant == "rank" and (x.d != 1 or y.d != 1):
        raise UsageError("--rank needs single x and y columns")
    s = distance_stats(x, y, args.alpha, variant, seed)
    notes = []
    if s.degenerate:
        notes.append("degenerate: a distance variance is zero, dcor set to 0")
    if args.alpha == 2.0:
        notes.append("alpha=2 does not characterize independence")
    return {
        "command": "stats", "n": s.n, "alpha": s.alpha, "variant": variant,
        "dcov": s.dcov, "dcor": s.dcor, "dvar_x": s.dvar_x, "dvar_y": s.dvar_y,
        "nV2": s.n * s.dcov_sq, "dropped_rows": dropped, "seed": seed, "notes": notes,
    }


def cmd_test(args) -> dict:
    x, y, dropped = _load(args)
    if args.method == "permutation":
        rep = permutation_test(x, y, args.replicates, args.seed, args.normalized, args.alpha, args.threads)
    elif args.method == "chi2":
        rep = chi2_bound_test(x, y, args.level, args.alpha)
    else:
        if x.d != 1 or y.d != 1:
            raise UsageError("rank method needs single x and y columns")
        rep = rank_test(x, y, args.level, args.seed, "table")
    return {"command": "test", **rep.to_dict(), "dropped_rows": dropped}


def cmd_rank_test(args) -> dict:
    x, y, dropped = _load(args)
    if x.d != 1 or y.d != 1:
        raise UsageError("rank-test needs single x and y columns")
    rep = rank_test(x, y, args.level, args.seed, args.mode)
    return {"command": "rank-test", **rep.to_dict(), "dropped_rows": dropped}


def cmd_jackknife(args) -> tuple[dict, list[dict]]:
    x, y, dropped = _load(args)
    labels = None
    if args.labels:
        labels = load_labels(args.input, args.labels, args.missing,
                             required=list(x.column_names + y.column_names))
    rep = jackknife(distance_matrix(x, args.alpha), distance_matrix(y, args.alpha))
    if not rep.se_dcor > 0.0:
        raise DataError("no variation among jackknife replicates: standard error is 0")
    stud = studentize(rep)
    infl = influence(rep)
    labels = labels or [str(i + 1) for i in range(rep.n)]
    rows = [
        {"label": lab, "dcov_sq": float(v), "dcor": float(math.sqrt(r)),
         "studentized": float(s), "influence": float(f)}
        for lab, v, r, s, f in zip(labels, rep.replicates_dcov_sq, rep.replicates_dcor_sq, stud, infl)
    ]
    full = distance_stats(x, y, args.alpha)
    report = {
        "command": "jackknife", "n": rep.n, "alpha": args.alpha, "dcor": full.dcor,
        "se_dcor": rep.se_dcor, "most_influential": rows[int(np.argmax(infl))]["label"],
        "dropped_rows": dropped, "seed": args.seed, "replicates": rows,
    }
    return report, rows


def _toy_data():
    path = resources.files("dcovkit").joinpath("data/toy.csv")
    with resources.as_file(path) as p:
        return load_csv(p, "x1,x2", "y")


def cmd_theory(args) -> tuple[dict, Optional[list[dict]]]:
    if args.what == "bvn-curve":
        curve = bvn_curve(args.rho, args.points)
        rows = [{"rho": float(r), "dcor": float(v)} for r, v in zip(curve.rho_grid, curve.r_values)]
        return {"command": "theory bvn-curve", "seed": args.seed, "curve": rows}, rows
    if args.what == "constants":
        rows = []
        for d in args.d:
            for a in args.alpha:
                rows.append({"d": d, "alpha": a, "C": constant_C(d, a)})
        return {"command": "theory constants", "seed": args.seed, "constants": rows}, rows
    # brownian-check
    if args.input:
        if not (args.x and args.y):
            raise UsageError("--x and --y are required with --input")
        x, y, _ = _load(args)
        source = args.input
    else:
        x, y, _ = _toy_data()
        source = "bundled toy data"
    seed = resolve_seed(args.seed)
    est, se = brownian_cov_mc(x, y, args.draws, seed)
    ref = distance_stats(x, y).dcov_sq
    ok = abs(est - ref) <= 3.0 * se
    report = {
        "command": "theory brownian-check", "data": source, "n": x.n, "draws": args.draws,
        "estimate": est, "mc_se": se, "dcov_sq_reference": ref,
        "z": (est - ref) / se if se > 0 else 0.0, "pass": bool(ok), "seed": seed,
    }
    return report, None


def cmd_power(args) -> tuple[dict, list[dict]]:
    model = parse_model(args.model)
    tests = [t.strip() for t in args.tests.split(",") if t.strip()]
    seed = resolve_seed(args.seed)
    curve = power_study(model, args.sizes, args.level, args.runs, tests, seed, args.replicates, args.threads)
    rows = curve.rows()
    for r in rows:
        r["se"] = math.sqrt(r["power"] * (1 - r["power"]) / r["runs"])
    report = {"command": "power", "model": curve.model, "level": curve.level, "runs": curve.runs_per_cell,
              "replicates": curve.replicates, "seed": seed, "power": rows}
    return report, rows


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "stats": cmd_stats, "test": cmd_test, "rank-test": cmd_rank_test,
        "jackknife": cmd_jackknife, "theory": cmd_theory, "power": cmd_power,
    }
    try:
        out = handlers[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DataError, ValueError, ArithmeticError, OSError) as exc:
        print(f"dcovkit: error: {exc}", file=sys.stderr)
        return 1
    report, table = out if isinstance(out, tuple) else (out, None)
    print(render(report, args.format, table))
    return 0


if __name__ == "__main__":
    sys.exit(main())
