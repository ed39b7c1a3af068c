"""Command-line interface: ``chartbench <subcommand> [flags]``.

Exit status is 0 on success, 2 on invalid input and 3 when a computation
fails (censored runs, unreachable change point, calibration bracket or
tolerance failure).
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import analytic, calibrate as cal, mc
from .charts import ChartSpec, Family, LimitPolicy, RunsRule, SpecError
from .bench import experiments as ex
from .bench.report import Cell, ReportTable, emit

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3

_RR = {
    "2of2": RunsRule.TWO_OF_TWO, "2of3": RunsRule.TWO_OF_THREE, "modified": RunsRule.MODIFIED_TWO_OF_THREE,
    "TwoOfTwo": RunsRule.TWO_OF_TWO, "TwoOfThree": RunsRule.TWO_OF_THREE,
    "ModifiedTwoOfThree": RunsRule.MODIFIED_TWO_OF_THREE,
}
_POLICY = {"tv": LimitPolicy.TIME_VARYING, "timevarying": LimitPolicy.TIME_VARYING,
           "asymptotic": LimitPolicy.ASYMPTOTIC, "asy": LimitPolicy.ASYMPTOTIC}


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _ints(text: str) -> list[int]:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}")
    return [int(v) for v in vals]


def _w_range(text: str) -> list[int]:
    if ":" in text:
        a, b = text.split(":", 1)
        return list(range(int(a), int(b) + 1))
    return _ints(text)


def _chart_flags(p: argparse.ArgumentParser, limit: bool = True) -> None:
    g = p.add_argument_group("chart design")
    g.add_argument("--chart", required=True, type=str.upper, choices=[f.value for f in Family],
                   metavar="FAMILY", help="one of " + ", ".join(f.value.lower() for f in Family))
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--k", type=float)
    g.add_argument("--a-star", dest="a_star", type=float)
    g.add_argument("--w", type=int)
    g.add_argument("--p", type=float)
    if limit:
        g.add_argument("--limit", type=float, help="limit factor (c_E, h, b*, L_S, L_P, ...); RR-CUSUM alarm limit")
        g.add_argument("--al", type=float, help="RR-CUSUM alarm limit ('inf' for a pure runs rule)")
    g.add_argument("--wl", type=float, help="RR-CUSUM warning limit")
    g.add_argument("--policy", default="tv", type=str.lower, choices=sorted(_POLICY))
    g.add_argument("--rr", choices=sorted(_RR), help="runs rule for RR-CUSUM / RR-EWMA")


def _run_flags(p: argparse.ArgumentParser, reps: int) -> None:
    g = p.add_argument_group("simulation")
    g.add_argument("--reps", type=int, default=reps)
    g.add_argument("--paper-scale", action="store_true", help=f"use {mc.PAPER_SCALE_REPS:.0e} replications")
    g.add_argument("--seed", type=int, default=mc.DEFAULT_SEED)
    g.add_argument("--threads", type=int, help="worker threads (default: RL_THREADS or all cores)")
    g.add_argument("--out", help="directory for CSV/JSON output")
    g.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chartbench", description="Run-length analysis of control charts.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("calibrate", help="find the limit factor for a target in-control ARL")
    _chart_flags(c, limit=False)
    c.add_argument("--target-arl", type=float, required=True)
    c.add_argument("--tolerance", type=float, default=0.0025)
    _run_flags(c, mc.DEFAULT_TABLE_REPS)

    a = sub.add_parser("arl", help="zero-state ARL")
    _chart_flags(a)
    a.add_argument("--delta", type=_floats, default=[0.0])
    _run_flags(a, mc.DEFAULT_TABLE_REPS)

    d = sub.add_parser("ced", help="conditional expected delay D_tau")
    _chart_flags(d)
    d.add_argument("--delta", type=_floats, required=True)
    d.add_argument("--tau", type=_ints, required=True)
    _run_flags(d, mc.DEFAULT_PROFILE_REPS)

    pr = sub.add_parser("profile", help="CED profile D_1 .. D_tau")
    _chart_flags(pr)
    pr.add_argument("--delta", type=_floats, required=True)
    pr.add_argument("--tau", type=int, default=mc.STEADY_STATE_TAU, help="largest change point")
    _run_flags(pr, mc.DEFAULT_PROFILE_REPS)

    wc = sub.add_parser("worstcase", help="delay conditioned on the first observation")
    _chart_flags(wc)
    wc.add_argument("--delta", type=_floats, required=True)
    wc.add_argument("--x1", type=_floats, default=list(np.round(np.arange(-4.0, 4.0001, 0.5), 10)),
                    help="grid of first observations, e.g. --x1=-4,-2,0,2")
    _run_flags(wc, mc.DEFAULT_PROFILE_REPS)

    o = sub.add_parser("optimize", help="D_100-optimal window for MA / DMA")
    o.add_argument("--chart", required=True, type=str.upper, choices=["MA", "DMA"])
    o.add_argument("--delta", type=float, required=True)
    o.add_argument("--w-range", type=_w_range, required=True, help="e.g. 15:25 or 3,4,5")
    o.add_argument("--target-arl", type=float, default=370.0)
    o.add_argument("--tolerance", type=float, default=0.01)
    o.add_argument("--calibration-reps", type=int, default=200_000)
    _run_flags(o, mc.DEFAULT_PROFILE_REPS)

    r = sub.add_parser("reproduce", help="run a registered experiment")
    r.add_argument("--experiment", required=True, help="experiment id or 'all'")
    r.add_argument("--profile-reps", type=int)
    r.add_argument("--calibration-reps", type=int)
    r.add_argument("--target-arl", type=float)
    r.add_argument("--delta", type=_floats)
    _run_flags(r, mc.DEFAULT_TABLE_REPS)

    sub.add_parser("list", help="list experiment ids and their anchors")
    return p


# ---------------------------------------------------------------------------

def spec_from_args(args, with_limit: bool = True) -> ChartSpec:
    """Validate the design flags against the family and build the spec."""
    fam = Family(args.chart)
    rr = _RR[args.rr] if args.rr else RunsRule.NONE
    limit = getattr(args, "limit", None)
    al = getattr(args, "al", None)
    kw = dict(family=fam, lam=args.lam, k=args.k, a_star=args.a_star, w=args.w, p=args.p,
              limit_policy=_POLICY[args.policy], rr_kind=rr, warning_factor=args.wl)
    if fam is Family.RRCUSUM:
        if limit is not None and al is not None and limit != al:
            raise SpecError("--limit and --al conflict")
        kw["alarm_factor"] = al if al is not None else limit
    else:
        if al is not None:
            raise SpecError("--al applies to rrcusum only")
        kw["limit_factor"] = limit
    spec = ChartSpec(**kw)
    if with_limit and spec.limit is None:
        raise SpecError(f"{fam.value} needs a limit (--limit{' or --al' if fam is Family.RRCUSUM else ''}); "
                        "use 'calibrate' to find one")
    return spec


def _reps(args) -> int:
    return mc.PAPER_SCALE_REPS if args.paper_scale else args.reps


def _print_table(t: ReportTable, out=None) -> None:
    out = out or sys.stdout
    print(f"# {t.title}", file=out)
    print(f"{t.row_name:<28} {t.col_name:>10} {'estimate':>14} {'stderr':>11} {'n':>10} {'reference':>10}", file=out)
    for r in t.rows:
        for c in t.cols:
            cell = t.cells.get((r, c))
            if cell is None:
                continue
            se = "" if cell.stderr is None else f"{cell.stderr:.4g}"
            n = "" if cell.n is None else str(cell.n)
            print(f"{r:<28} {c:>10} {cell.estimate:>14.6g} {se:>11} {n:>10} {cell.paper_value or '':>10}", file=out)


def _finish(args, tables) -> int:
    for t in tables:
        t.validate()
        _print_table(t)
        if args.out:
            for path in emit(t, args.out, args.format):
                logging.getLogger(__name__).info("wrote %s", path)
    return EXIT_OK


def _meta(args, spec: ChartSpec | None = None) -> dict:
    m = {"master_seed": args.seed, "reps": _reps(args), "version": ex.version_string()}
    if spec is not None:
        m["spec"] = spec.label()
    return m


def cmd_calibrate(args) -> int:
    spec = spec_from_args(args, with_limit=False)
    target = cal.CalibrationTarget(args.target_arl, args.tolerance, n_reps=_reps(args))
    res = cal.calibrate_limit(spec, target, args.seed)
    t = ReportTable("calibrate", f"Calibrated limit of {spec.label()} for A={args.target_arl:g}",
                    "quantity", "design", [], [spec.label()], metadata=_meta(args, res.spec))
    col = spec.label()
    t.set("limit", col, Cell(res.limit, res.limit_stderr, target.n_reps, "MonteCarloCalibration"))
    t.set("in-control ARL", col, Cell.from_estimate(res.achieved))
    if spec.family is Family.EWMA:
        c = cal.calibrate_ewma_numeric(spec.lam, args.target_arl, spec.limit_policy)
        t.set("limit [numeric]", col, Cell.exact(c, "FiniteHorizonRecursion"))
    elif spec.family is Family.CUSUM:
        t.set("limit [markov]", col, Cell.exact(cal.calibrate_cusum_markov(spec.k, args.target_arl),
                                                "MarkovChain"))
    return _finish(args, [t])


def cmd_arl(args) -> int:
    spec = spec_from_args(args)
    ests = mc.zero_state_table(spec, args.delta, _reps(args), args.seed)
    t = ReportTable("arl", f"Zero-state ARL of {spec.label()}", "design", "delta", [], [],
                    metadata=_meta(args, spec))
    for d, e in zip(args.delta, ests):
        if e.censored:
            raise mc.CensoredRunError(f"delta={d:g}: {e.censored} censored runs")
        t.set(spec.label(), f"{d:g}", Cell.from_estimate(e))
    return _finish(args, [t])


def cmd_ced(args) -> int:
    spec = spec_from_args(args)
    t = ReportTable("ced", f"Conditional expected delay of {spec.label()}", "delta", "tau", [], [],
                    metadata=_meta(args, spec))
    for d in args.delta:
        for tau in args.tau:
            e = mc.ced(spec, mc.ChangePointModel(tau, d), _reps(args), args.seed)
            t.set(f"{d:g}", str(tau), Cell.from_estimate(e))
    return _finish(args, [t])


def cmd_profile(args) -> int:
    spec = spec_from_args(args)
    t = ReportTable("profile", f"CED profile of {spec.label()}", "delta", "tau", [], [],
                    metadata=_meta(args, spec))
    for d in args.delta:
        for tau, e in enumerate(mc.ced_profile(spec, d, args.tau, _reps(args), args.seed), start=1):
            t.set(f"{d:g}", str(tau), Cell.from_estimate(e))
    return _finish(args, [t])


def cmd_worstcase(args) -> int:
    spec = spec_from_args(args)
    t = ReportTable("worstcase", f"Delay given X1=x1 (tau=2) of {spec.label()}", "delta", "x1", [], [],
                    metadata=_meta(args, spec))
    for d in args.delta:
        z = mc.zero_state_arl(spec, d, max(_reps(args), 1000), args.seed)
        t.set(f"{d:g}", "zero-state", Cell.from_estimate(z))
        prof = mc.conditional_delay_given_x1(spec, d, args.x1, _reps(args), args.seed)
        for x, e in zip(prof.x1, prof.estimates):
            if e is not None:
                t.set(f"{d:g}", f"{x:g}", Cell.from_estimate(e))
        means = prof.means()
        if np.any(np.isfinite(means)):
            j = int(np.nanargmax(means))
            t.set(f"{d:g}", "sup", Cell.from_estimate(prof.estimates[j]))
            t.metadata.setdefault("argmax_x1", {})[f"{d:g}"] = float(prof.x1[j])
        t.metadata.setdefault("rejected_x1", {})[f"{d:g}"] = prof.rejected
    return _finish(args, [t])


def cmd_optimize(args) -> int:
    target = cal.CalibrationTarget(args.target_arl, args.tolerance, n_reps=args.calibration_reps)
    prof = cal.optimize_window(args.chart, args.delta, args.w_range, args.target_arl, args.seed,
                               target, _reps(args))
    t = ReportTable("optimize", f"D100 of {args.chart}(w) at delta={args.delta:g}, A={args.target_arl:g}",
                    "quantity", "w", [], [], metadata={**_meta(args), "best_w": prof.best_w})
    for w, lim, e in zip(prof.windows, prof.limits, prof.d100):
        t.set("D100", str(w), Cell.from_estimate(e))
        t.set("limit", str(w), Cell(lim, None, None, "MonteCarloCalibration"))
    t.set("w*", str(prof.best_w), Cell.exact(prof.best_w, "MonteCarloArgmin"))
    return _finish(args, [t])


def cmd_reproduce(args) -> int:
    ids = [e for e, _ in ex.list_experiments()] if args.experiment == "all" else [args.experiment]
    for eid in ids:
        if eid not in ex.EXPERIMENTS:
            raise UsageError(f"unknown experiment {eid!r}; run 'chartbench list'")
    tables = []
    for eid in ids:
        reps = _reps(args)
        cfg = ex.default_config(
            eid, reps=reps, seed=args.seed, out=args.out,
            profile_reps=args.profile_reps or (reps if args.paper_scale else None),
            calibration_reps=args.calibration_reps, target_arl=args.target_arl,
            deltas=tuple(args.delta) if args.delta else None)
        tables += ex.run_experiment(cfg)
    return _finish(args, tables)


def cmd_list(args) -> int:
    for eid, anchor in ex.list_experiments():
        print(f"{eid:<20} {anchor}")
    return EXIT_OK


COMMANDS = {"calibrate": cmd_calibrate, "arl": cmd_arl, "ced": cmd_ced, "profile": cmd_profile,
            "worstcase": cmd_worstcase, "optimize": cmd_optimize, "reproduce": cmd_reproduce, "list": cmd_list}

_FAILURES = (mc.CensoredRunError, mc.UnreachableChangePointError, cal.CalibrationError,
             ex.ExperimentError, analytic.NumericArlError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"chartbench: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "threads", None) is not None or args.command != "list":
            mc.set_threads(getattr(args, "threads", None))
        return COMMANDS[args.command](args)
    except _FAILURES as exc:
        print(f"chartbench: computation failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (SpecError, UsageError, ValueError) as exc:
        print(f"chartbench: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
