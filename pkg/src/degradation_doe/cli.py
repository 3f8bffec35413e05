"""Command line front end: ``degradation-doe <command> scenario.json [...]``.

Every command prints a JSON report (sorted keys, 12 significant digits) on
stdout.  ``--out-dir`` additionally writes the report and CSV files there;
``--csv`` writes the command's main table to the given path.

Exit codes: 0 success, 2 input error, 3 degenerate quantile, 4 validation
failure (degenerate-estimate rate above 1%).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .designs import _sig, exact_settings
from .destructive import destructive_efficiency, destructive_optimal_design, sensitivity_curves
from .errors import AmbiguousQuantileError, DegenerateQuantileError, DesignError
from .estimation import SimulationSpec, simulate_paths, validate_avar
from .failure_time import alpha_max, h_limit, h_sup, h_table, quantile, use_profile
from .scenario_io import ScenarioError, design_to_csv, load_scenario, read_design_csv
from .stress_design import DEFAULT_GRID, optimal_stress_for_quantile, stress_benchmarks, stress_efficiency
from .time_design import GAP_TOL, MAX_ITER, TimeGrid, optimal_time_plan, time_plan_efficiency

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_VALIDATION = 0, 2, 3, 4


class _Output:
    def __init__(self, args):
        self.out_dir = Path(args.out_dir) if getattr(args, "out_dir", None) else None
        self.csv_path = Path(args.csv) if getattr(args, "csv", None) else None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)

    def file(self, name: str, text: str):
        if self.out_dir is not None:
            (self.out_dir / name).write_text(text)

    def main_csv(self, name: str, text: str):
        self.file(name, text)
        if self.csv_path is not None:
            self.csv_path.write_text(text)

    def report(self, name: str, payload) -> str:
        text = payload if isinstance(payload, str) else json.dumps(_sig(payload), indent=2, sort_keys=True)
        text = text.rstrip("\n") + "\n"
        self.file(name, text)
        sys.stdout.write(text)
        return text


def _table_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_failure_time(args) -> int:
    sc = load_scenario(args.scenario)
    alpha = sc.alpha if args.alpha is None else args.alpha
    prof = use_profile(sc)
    q = quantile(prof, alpha, with_gradients=False)
    report = {
        "scenario": sc.name,
        "alpha": alpha,
        "z_alpha": q.z,
        "delta": prof.delta,
        "t_alpha": q.t_alpha,
        "status": q.status,
        "h0": q.h0,
        "h_limit": h_limit(prof),
        "h_sup": h_sup(prof),
        "alpha_max": alpha_max(prof),
    }
    out = _Output(args)
    out.report("failure_time.json", report)
    if q.degenerate:
        sys.stderr.write(f"error: {alpha:g}-quantile is degenerate ({q.status}); "
                         f"alpha_max = {report['alpha_max']:.6g}, h(0) = {q.h0:.6g}\n")
        return EXIT_DEGENERATE
    upper = sc.model.time_basis.upper[0]
    t_max = args.t_max if args.t_max is not None else max(2.0 * q.t_alpha, upper)
    tab = h_table(prof, np.linspace(0.0, t_max, args.grid))
    out.main_csv("failure_time_h.csv", _table_csv(["t", "h", "F_T"], tab.tolist()))
    return EXIT_OK


def _emit_design(out: _Output, report, stem: str):
    out.main_csv(f"{stem}.csv", design_to_csv(report.design, report.variables))
    out.report(f"{stem}.json", report.to_json())


def _time_grid(sc, args) -> TimeGrid:
    tg = sc.extra.get("time_grid", {})
    dt = args.delta_t if args.delta_t is not None else tg.get("delta_t")
    k = args.k if args.k is not None else tg.get("k")
    if dt is None or k is None:
        raise ScenarioError("time design needs --delta-t and --k (or a time_grid entry in the scenario)")
    tb = sc.model.time_basis
    return TimeGrid(float(dt), int(k), float(tb.lower[0]), float(tb.upper[0]))


def cmd_design(args) -> int:
    sc = load_scenario(args.scenario)
    if args.alpha is not None:
        sc = sc.replace(alpha=args.alpha)
    out = _Output(args)
    grid = args.grid if args.grid is not None else DEFAULT_GRID
    if args.kind == "stress":
        rep = optimal_stress_for_quantile(sc, grid=grid, benchmark=args.benchmark)
        _emit_design(out, rep, "stress_design")
    elif args.kind == "time":
        rep = optimal_time_plan(sc, _time_grid(sc, args), tol=args.tol, max_iter=args.max_iter)
        pts, w = rep.extra["grid_points"], rep.extra["grid_weights"]
        out.file("time_weights.csv", _table_csv(["t", "weight"], [(float(a), float(b)) for a, b in zip(pts, w)]))
        _emit_design(out, rep, "time_design")
    else:
        rep = destructive_optimal_design(sc, grid=grid, benchmark=args.benchmark)
        if args.sensitivity:
            tc, rc = sensitivity_curves(sc)
            out.file("sensitivity_t_half.csv", tc.to_csv())
            out.file("sensitivity_ratio.csv", rc.to_csv())
        _emit_design(out, rep, "destructive_design")
    return EXIT_OK


def _design_kind(sc, names) -> str:
    sv = list(sc.model.stress_variables)
    tv = list(sc.model.time_basis.variables)
    if names == sv:
        return "stress"
    if names == tv:
        return "time"
    if names == sv + tv:
        return "destructive"
    raise ScenarioError(f"design columns {names} match neither {sv}, {tv} nor {sv + tv}")


def cmd_efficiency(args) -> int:
    sc = load_scenario(args.scenario)
    design, names = read_design_csv(args.design)
    kind = _design_kind(sc, names)
    ref = None
    if args.reference is not None:
        ref, rnames = read_design_csv(args.reference)
        if _design_kind(sc, rnames) != kind:
            raise ScenarioError("reference design is of a different kind")
    report = {"scenario": sc.name, "kind": kind}
    if kind == "stress":
        if ref is None:
            ref = optimal_stress_for_quantile(sc, grid=args.grid or DEFAULT_GRID, benchmark=False,
                                              certify=False).design
        report["efficiency"] = stress_efficiency(design, sc, optimum=ref)
        if args.benchmark:
            c1 = sc.model.f1(sc.use_condition, check=False)[0]
            values, effs = stress_benchmarks(sc.model, c1, ref)
            report["benchmark_values"], report["benchmark_efficiencies"] = values, effs
    elif kind == "time":
        k = args.k if args.k is not None else int(round(1.0 / design.weights.max()))
        if ref is None:
            ref = optimal_time_plan(sc, _time_grid(sc, args)).design
        report["k"] = k
        report["efficiency"] = time_plan_efficiency(design, ref, sc, k)
    else:
        report["efficiency"] = destructive_efficiency(design, sc, optimum=ref)
    _Output(args).report("efficiency.json", report)
    return EXIT_OK


def _spec_from_args(args, sc):
    design, names = read_design_csv(args.design)
    if names != list(sc.model.stress_variables):
        raise ScenarioError(f"design columns {names} are not the stress variables {list(sc.model.stress_variables)}")
    settings = exact_settings(design, args.n)
    return SimulationSpec(sc, settings, sc.fixed_time_plan(), replications=args.reps, base_seed=args.seed)


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    alpha = sc.alpha if args.alpha is None else args.alpha
    spec = _spec_from_args(args, sc)
    rep = validate_avar(spec, alpha, workers=args.workers)
    out = _Output(args)
    out.main_csv("validation_estimates.csv", rep.estimates_csv())
    out.report("validation.json", rep.to_json())
    for w in rep.warnings:
        sys.stderr.write(f"warning: {w}\n")
    return EXIT_VALIDATION if rep.flagged else EXIT_OK


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    spec = _spec_from_args(args, sc)
    Y = simulate_paths(spec)
    names = list(sc.model.stress_variables) + list(sc.model.time_basis.variables)
    rows = []
    for r in range(spec.replications):
        for i in range(spec.n_units):
            for j, t in enumerate(spec.times):
                rows.append([r, i] + [float(v) for v in spec.settings[i]] + [float(t), float(Y[r, i, j])])
    out = _Output(args)
    out.main_csv("simulated.csv", _table_csv(["replication", "unit"] + names + ["y"], rows))
    out.report("simulate.json", {"scenario": sc.name, "replications": spec.replications, "n_units": spec.n_units,
                                 "times": spec.times, "base_seed": spec.base_seed})
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="degradation-doe", description="Optimal designs for accelerated degradation tests")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, alpha=True):
        sp.add_argument("scenario", help="scenario JSON file")
        sp.add_argument("--out-dir", help="directory for report and CSV files")
        sp.add_argument("--csv", help="write the main CSV table to this path")
        if alpha:
            sp.add_argument("--alpha", type=float, help="quantile level (default: scenario value)")

    sp = sub.add_parser("failure-time", help="failure-time quantile and h(t), F_T(t) table")
    common(sp)
    sp.add_argument("--grid", type=int, default=201, help="number of time points in the CSV table")
    sp.add_argument("--t-max", type=float, help="upper end of the CSV time grid")
    sp.set_defaults(func=cmd_failure_time)

    sp = sub.add_parser("design", help="optimal stress, time or destructive design")
    sp.add_argument("kind", choices=("stress", "time", "destructive"))
    common(sp)
    sp.add_argument("--grid", type=int, help=f"stress grid points per axis (default {DEFAULT_GRID})")
    sp.add_argument("--benchmark", action="store_true", help="add uniform-design efficiencies")
    sp.add_argument("--delta-t", type=float, help="time grid increment (time design)")
    sp.add_argument("--k", type=int, help="measurements per unit (time design)")
    sp.add_argument("--max-iter", type=int, default=MAX_ITER, help="iteration cap (time design)")
    sp.add_argument("--tol", type=float, default=GAP_TOL, help="equivalence gap tolerance (time design)")
    sp.add_argument("--sensitivity", action="store_true", help="write sensitivity curves (destructive design)")
    sp.set_defaults(func=cmd_design)

    sp = sub.add_parser("efficiency", help="efficiency of a design CSV")
    common(sp, alpha=False)
    sp.add_argument("design", help="design CSV")
    sp.add_argument("--reference", help="reference design CSV (default: the optimum)")
    sp.add_argument("--grid", type=int)
    sp.add_argument("--benchmark", action="store_true")
    sp.add_argument("--delta-t", type=float)
    sp.add_argument("--k", type=int)
    sp.set_defaults(func=cmd_efficiency)

    for name, fn, hlp in (("validate", cmd_validate, "Monte Carlo check of the asymptotic variance"),
                          ("simulate", cmd_simulate, "simulate degradation paths")):
        sp = sub.add_parser(name, help=hlp)
        common(sp, alpha=name == "validate")
        sp.add_argument("design", help="stress design CSV")
        sp.add_argument("--n", type=int, default=200, help="number of units")
        sp.add_argument("--reps", type=int, default=2000 if name == "validate" else 1, help="replications")
        sp.add_argument("--seed", type=int, default=0, help="base seed")
        if name == "validate":
            sp.add_argument("--workers", type=int, default=1, help="threads for replications")
        sp.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DegenerateQuantileError, AmbiguousQuantileError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_DEGENERATE
    except (DesignError, ValueError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
