"""Command-line front end.

Every subcommand prints one JSON document (``"schema": 1``) carrying a
``"manifest"`` of what was run.  Exit codes: 0 success, 1 input error,
2 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .channel import SpecError, load_spec, weighted_rate
from .envelope import GridConfig, build_hulls, evaluate_many
from .fdma import fdma_power_region_threshold, pairwise_fdma_condition
from .optimizer import solve
from .oracle import OracleConfig, SearchTooLarge, duality_gap, exhaustive_best, property_suite
from .symmetric import (OutOfRangeWarning, TangencyError, build_allocation_flat, f_star,
                        h_star, r_star_flat, solve_symmetric_selective, solve_tangency,
                        _is_symmetric)

SCHEMA = 1


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(f"{self.prog}: {message}")


def _timestamp(args):
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        try:
            t = _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc)
        except ValueError:
            raise InputError(f"bad SOURCE_DATE_EPOCH {epoch!r}") from None
        return t.isoformat()
    if getattr(args, "timestamp", False):
        return _dt.datetime.now(_dt.timezone.utc).isoformat()
    return None


def _manifest(args, overrides, outputs):
    return {"subcommand": args.command,
            "input": getattr(args, "spec", None),
            "overrides": overrides,
            "outputs": outputs,
            "version": __version__,
            "timestamp": _timestamp(args)}


def _emit(args, body, overrides=None, outputs=None):
    outputs = list(outputs or [])
    if args.out:
        outputs.append(args.out)
    doc = {"schema": SCHEMA, **body, "manifest": _manifest(args, overrides or {}, outputs)}
    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if not isinstance(x, str) else x for x in row])
    return str(path)


def _load(args):
    try:
        return load_spec(args.spec)
    except FileNotFoundError:
        raise InputError(f"spec file not found: {args.spec}") from None
    except OSError as exc:
        raise InputError(f"cannot read {args.spec}: {exc}") from None
    except SpecError as exc:
        raise InputError(str(exc)) from None


def _floats(text, name):
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise InputError(f"--{name} expects comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# subcommands

def cmd_fdma_check(args):
    spec = _load(args)
    pairs = []
    for i in range(spec.K):
        for j in range(i + 1, spec.K):
            ok, per = pairwise_fdma_condition(spec, i, j)
            pairs.append({"i": i, "j": j, "certified": bool(ok),
                          "per_subchannel": [bool(per[m]) for m in range(spec.M)]})
    _emit(args, {"users": spec.K, "subchannels": spec.M, "pairs": pairs})
    return 0


def _tangency_json(alpha):
    if not 0 < alpha < 0.5:
        return {"alpha": alpha, "p_f": None, "p_h": None,
                "p_0": fdma_power_region_threshold(alpha) if alpha > 0 else None}
    return solve_tangency(alpha).to_json()


def _curve_rows(alpha, pmax, n):
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutOfRangeWarning)
        for p in np.linspace(0.0, pmax, n):
            fs = float(f_star(alpha, p)) if 0 < alpha < 0.5 else float("nan")
            rows.append((p, fs, float(h_star(p)), r_star_flat(alpha, p).value))
    return rows


def cmd_sym2(args):
    outputs = []
    if args.spec:
        spec = _load(args)
        try:
            res = solve_symmetric_selective(spec, sum_budget=args.power)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        body = res.to_json()
        body["tangency"] = [_tangency_json(float(a)) for a in spec.alpha[:, 0, 1]]
        body["regime"] = list(res.regimes)
        overrides = {"power": args.power}
    else:
        if args.alpha is None or args.power is None:
            raise InputError("sym2 needs --alpha and --power, or --spec")
        if args.power < 0:
            raise InputError("--power must be non-negative")
        try:
            env = r_star_flat(args.alpha, args.power)
            tang = _tangency_json(args.alpha)
        except (ValueError, TangencyError) as exc:
            raise InputError(str(exc)) from None
        alloc = build_allocation_flat(args.alpha, args.power)
        body = {"value": env.value, "regime": env.regime, "mix": env.mix,
                "p_f": tang["p_f"], "p_h": tang["p_h"], "p_0": tang["p_0"],
                "tangency": tang, "allocation": alloc.to_json()}
        overrides = {"alpha": args.alpha, "power": args.power}
        if args.csv:
            pmax = args.sweep_max
            if pmax is None:
                ref = tang["p_h"] if tang["p_h"] is not None else args.power
                pmax = 2.0 * max(ref, args.power, 1.0)
            outputs.append(_write_csv(args.csv, ["p", "f_star", "h_star", "r_star"],
                                      _curve_rows(args.alpha, pmax, args.sweep_points)))
    _emit(args, body, overrides, outputs)
    return 0


def _grid(args):
    kw = {}
    if args.grid is not None:
        if args.grid < 2:
            raise InputError("--grid must be at least 2")
        kw["points"] = args.grid
    if args.kappa is not None:
        kw["kappa"] = args.kappa
    return GridConfig(**kw)


def cmd_optimize(args):
    spec = _load(args)
    overrides = {"grid": args.grid, "kappa": args.kappa}
    if args.budgets:
        b = _floats(args.budgets, "budgets")
        if len(b) != spec.K:
            raise InputError(f"--budgets needs {spec.K} values")
        try:
            spec = spec.with_budgets(b)
        except (SpecError, ValueError) as exc:
            raise InputError(str(exc)) from None
        overrides["budgets"] = b
    grid = _grid(args)
    hulls = build_hulls(spec, grid)
    res = solve(spec, hulls=hulls)
    outputs = []
    if args.csv:
        prefix = args.csv
        rows = []
        for p in res.allocation.pieces:
            rows.append((p.start, *p.psd))
            rows.append((p.end, *p.psd))
        outputs.append(_write_csv(f"{prefix}_allocation.csv",
                                  ["f"] + [f"P_{i + 1}" for i in range(spec.K)], rows))
        for m, h in enumerate(hulls):
            pts = h.points
            env = evaluate_many(h, pts) if h.slopes is not None else h.ext_values
            outputs.append(_write_csv(
                f"{prefix}_hull_{m}.csv",
                [f"P_{i + 1}" for i in range(spec.K)] + ["R", "R_star"],
                (tuple(pt) + (r, e) for pt, r, e in zip(pts, h.grid_values, env))))
    _emit(args, {"result": res.to_json(), "spec": spec.to_json()}, overrides, outputs)
    return 0


def instance_checks(spec, levels=None, splits=2, grid=None):
    """Solver, oracle and duality cross-checks on one channel."""
    checks = {}
    hulls = build_hulls(spec, grid or GridConfig())
    res = solve(spec, hulls=hulls)
    lp_value = res.diagnostics["lp_value"]
    checks["achievability"] = {
        "value": res.value, "lp_value": lp_value,
        "passed": abs(weighted_rate(spec, res.allocation) - lp_value) <= 1e-9 * (1 + abs(lp_value))}
    counts = [len(d.weights) for d in res.decompositions]
    checks["sparsity"] = {"pieces": counts, "passed": max(counts) <= spec.K + 1}
    feas = res.allocation.is_feasible(spec.budgets)
    checks["feasibility"] = {"powers": res.powers.tolist(), "passed": bool(feas)}
    gap = duality_gap(spec, hulls, res.value, res.prices)
    gap["passed"] = (gap["gap"] <= 1e-6 * (1 + abs(res.value))
                     and gap["weak_duality_min"] >= -1e-9)
    checks["duality_gap"] = gap
    cfg = OracleConfig(levels, splits)
    try:
        orc = exhaustive_best(spec, cfg)
    except SearchTooLarge as exc:
        checks["oracle"] = {"skipped": str(exc), "passed": True}
    else:
        bound = res.value + res.diagnostics["grid_tolerance"]
        checks["oracle"] = {"value": orc.value, "tolerance": orc.tolerance,
                            "solver_bound": bound,
                            "passed": orc.value <= bound + 1e-9}
        if _is_symmetric(spec):
            sym = solve_symmetric_selective(spec)
            checks["symmetric"] = {
                "value": sym.value, "oracle": orc.value,
                "passed": (orc.value <= sym.value + 1e-9
                           and sym.value - orc.value <= orc.tolerance + 1e-9
                           and sym.value >= res.value - 1e-9)}
    return checks


def cmd_verify(args):
    counts = None
    if args.instances is not None:
        counts = {"strong_fdma": args.instances, "outsider_gain": args.instances}
    report = property_suite(args.seed, counts)
    body = {"properties": report}
    passed = report["passed"]
    if args.spec:
        spec = _load(args)
        checks = instance_checks(spec, args.levels, args.splits)
        body["instance"] = checks
        passed = passed and all(c["passed"] for c in checks.values())
    body["passed"] = passed
    _emit(args, body, {"seed": args.seed, "levels": args.levels, "splits": args.splits,
                       "instances": args.instances})
    return 0 if passed else 2


def cmd_sweep(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    alphas = np.linspace(0.0, 0.5, args.points + 1)[1:]
    rows = [(a, fdma_power_region_threshold(a)) for a in alphas]
    outputs = [_write_csv(out / "region.csv", ["alpha", "p_0"], rows)]
    alpha = args.alpha
    tang = _tangency_json(alpha)
    pmax = args.sweep_max
    if pmax is None:
        pmax = 2.0 * (tang["p_h"] if tang["p_h"] is not None else 100.0)
    outputs.append(_write_csv(out / "curves.csv", ["p", "f_star", "h_star", "r_star"],
                              _curve_rows(alpha, pmax, args.points)))
    _emit(args, {"tangency": tang}, {"alpha": alpha, "points": args.points}, outputs)
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="spectra", description="Spectrum management for interference channels")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="write JSON here instead of stdout")
        sp.add_argument("--timestamp", action="store_true",
                        help="record the wall-clock time in the manifest")

    s = sub.add_parser("fdma-check", help="pairwise orthogonalization test")
    s.add_argument("--spec", required=True)
    common(s)
    s.set_defaults(func=cmd_fdma_check)

    s = sub.add_parser("sym2", help="two-user symmetric channels")
    s.add_argument("--alpha", type=float)
    s.add_argument("--power", type=float)
    s.add_argument("--spec")
    s.add_argument("--csv", help="write a (p, f*, h*, r*) sweep")
    s.add_argument("--sweep-max", type=float)
    s.add_argument("--sweep-points", type=int, default=201)
    common(s)
    s.set_defaults(func=cmd_sym2)

    s = sub.add_parser("optimize", help="weighted sum-rate maximization")
    s.add_argument("--spec", required=True)
    s.add_argument("--grid", type=int, help="hull grid points per axis")
    s.add_argument("--kappa", type=float, help="hull box scale")
    s.add_argument("--budgets", help="comma-separated budget override")
    s.add_argument("--csv", metavar="PREFIX")
    common(s)
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("verify", help="property suites and oracle cross-checks")
    s.add_argument("--spec")
    s.add_argument("--levels", type=int)
    s.add_argument("--splits", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--instances", type=int, help="random instances per property")
    common(s)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="region boundary and envelope curves as CSV")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--points", type=int, default=200)
    s.add_argument("--sweep-max", type=float)
    common(s)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:   # --help
        return int(exc.code or 0)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
