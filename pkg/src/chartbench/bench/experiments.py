"""Declarative experiments reproducing the published tables and figure datasets."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .. import analytic, calibrate as cal, mc
from ..charts import ChartSpec, Family, LimitPolicy, RunsRule
from .report import Cell, ReportTable, load_paper_values, version_string

logger = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)
TAU_PROFILE = tuple(range(1, 101))


class ExperimentError(RuntimeError):
    """An experiment cell failed (censored runs, unreachable change point, calibration)."""


@dataclass(frozen=True)
class Design:
    """One row of an experiment: a chart, possibly still lacking its limit.

    ``target_arl`` marks a design to be calibrated first. ``numeric`` routes
    EWMA designs through the deterministic integral-equation backend instead
    of Monte Carlo.
    """

    label: str
    spec: ChartSpec
    target_arl: float | None = None
    numeric: bool = False

    def __post_init__(self):
        if self.spec.limit is None and self.target_arl is None:
            raise ValueError(f"design {self.label!r} has neither a limit nor a calibration target")
        if self.numeric and self.spec.family is not Family.EWMA:
            raise ValueError("numeric evaluation is available for EWMA designs only")


@dataclass
class ExperimentConfig:
    experiment_id: str
    designs: tuple = ()
    deltas: tuple = ()
    taus: tuple = (1,)
    target_arl: float | None = None
    reps: int = mc.DEFAULT_TABLE_REPS
    profile_reps: int = mc.DEFAULT_PROFILE_REPS
    seed: int = mc.DEFAULT_SEED
    out: str | None = None
    calibration_reps: int = mc.DEFAULT_TABLE_REPS
    calibration_tolerance: float = 0.0025
    rows: tuple | None = None
    options: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.experiment_id not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment_id!r}")
        if len(self.deltas) == 0:
            raise ValueError(f"{self.experiment_id}: the shift grid is empty")
        if len(self.taus) == 0:
            raise ValueError(f"{self.experiment_id}: the change-point grid is empty")
        if self.reps < 1000 or self.profile_reps < 1000 or self.calibration_reps < 1000:
            raise ValueError("replication counts must be >= 1000")
        if self.target_arl is not None and not self.target_arl > 1:
            raise ValueError("target ARL must exceed 1")
        labels = [d.label for d in self.designs]
        if len(set(labels)) != len(labels):
            raise ValueError("design labels must be unique")
        if self.rows is not None and labels:
            unknown = set(self.rows) - set(labels)
            if unknown:
                raise ValueError(f"unknown rows {sorted(unknown)}")

    def selected(self) -> list[Design]:
        if self.rows is None:
            return list(self.designs)
        return [d for d in self.designs if d.label in self.rows]

    def calibration_target(self, A: float) -> cal.CalibrationTarget:
        return cal.CalibrationTarget(A, self.calibration_tolerance, n_reps=self.calibration_reps)


@dataclass(frozen=True)
class Experiment:
    experiment_id: str
    anchor: str
    title: str
    build: Callable[[ExperimentConfig], list]
    defaults: Callable[[], dict]


# ---------------------------------------------------------------------------
# design resolution (calibrations are memoized per process)
# ---------------------------------------------------------------------------

_CAL_CACHE: dict = {}


def resolve(design: Design, config: ExperimentConfig) -> tuple[ChartSpec, dict]:
    """Spec with its limit filled in, plus calibration metadata."""
    spec = design.spec
    if spec.limit is not None:
        return spec, {"limit": spec.limit, "source": "given"}
    A = design.target_arl
    if spec.family is Family.EWMA:
        key = ("numeric", spec, A)
        if key not in _CAL_CACHE:
            c = cal.calibrate_ewma_numeric(spec.lam, A, spec.limit_policy)
            _CAL_CACHE[key] = (spec.with_limit(c), {"limit": c, "source": "numeric", "target_arl": A})
        return _CAL_CACHE[key]
    target = config.calibration_target(A)
    key = ("mc", spec, target, config.seed)
    if key not in _CAL_CACHE:
        try:
            res = cal.calibrate_limit(spec, target, config.seed)
        except cal.CalibrationError as exc:
            raise ExperimentError(f"{design.label}: {exc}") from exc
        _CAL_CACHE[key] = (res.spec, {
            "limit": res.limit, "limit_stderr": res.limit_stderr, "source": "calibrated",
            "target_arl": A, "achieved_arl": res.achieved.mean, "achieved_stderr": res.achieved.stderr,
            "iterations": res.iterations})
    return _CAL_CACHE[key]


def clear_calibration_cache() -> None:
    _CAL_CACHE.clear()


def _paper(table_id: str):
    ref = load_paper_values(table_id)
    return lambda r, c: ref.get((r, c))


def _fmt(x: float) -> str:
    return f"{x:g}"


def _check(est: mc.RunLengthEstimate, where: str) -> mc.RunLengthEstimate:
    if est.censored:
        raise ExperimentError(f"{where}: {est.censored} censored runs")
    if est.replications == 0:
        raise ExperimentError(f"{where}: no replication reached the change point")
    return est


def _numeric_arl(spec: ChartSpec, delta: float) -> float:
    return analytic.ewma_arl_numeric(spec.lam, spec.limit, delta, spec.limit_policy.value).value


def _numeric_ced(spec: ChartSpec, delta: float, tau: int) -> float:
    return analytic.ewma_ced_numeric(spec.lam, spec.limit, delta, tau, spec.limit_policy.value).value


# ---------------------------------------------------------------------------
# generic builders
# ---------------------------------------------------------------------------

def _new_table(config: ExperimentConfig, title: str, row_name: str, col_name: str, cols) -> ReportTable:
    return ReportTable(config.experiment_id, title, row_name, col_name, [], list(cols))


def _zero_state(config: ExperimentConfig, title: str, scale: float = 1.0) -> ReportTable:
    """Zero-state ARL of every design at every shift (columns are the printed shift axis)."""
    paper = _paper(config.experiment_id)
    cols = [_fmt(d) for d in config.deltas]
    deltas = [d * scale for d in config.deltas]
    t = _new_table(config, title, "design", "delta", cols)
    for d in config.selected():
        spec, meta = resolve(d, config)
        t.metadata.setdefault("designs", {})[d.label] = {"spec": spec.label(), **meta}
        if d.numeric:
            for c, delta in zip(cols, deltas):
                t.set(d.label, c, Cell.exact(_numeric_arl(spec, delta), "FiniteHorizonRecursion", paper(d.label, c)))
            continue
        ests = mc.zero_state_table(spec, deltas, config.reps, config.seed)
        for c, e in zip(cols, ests):
            t.set(d.label, c, Cell.from_estimate(_check(e, f"{d.label} delta={c}"), paper(d.label, c)))
    return t


def _steady_state(config: ExperimentConfig, title: str, scale: float = 1.0,
                  tau: int = mc.STEADY_STATE_TAU) -> ReportTable:
    paper = _paper(config.experiment_id)
    cols = [_fmt(d) for d in config.deltas]
    deltas = [d * scale for d in config.deltas]
    t = _new_table(config, title, "design", "delta", cols)
    for d in config.selected():
        spec, meta = resolve(d, config)
        t.metadata.setdefault("designs", {})[d.label] = {"spec": spec.label(), **meta}
        if d.numeric:
            for c, delta in zip(cols, deltas):
                t.set(d.label, c, Cell.exact(_numeric_ced(spec, delta, tau), "FiniteHorizonRecursion",
                                             paper(d.label, c)))
            continue
        try:
            ests = mc.steady_state_table(spec, deltas, config.profile_reps, config.seed, tau=tau)
        except mc.UnreachableChangePointError as exc:
            raise ExperimentError(f"{d.label}: {exc}") from exc
        for c, e in zip(cols, ests):
            t.set(d.label, c, Cell.from_estimate(_check(e, f"{d.label} delta={c}"), paper(d.label, c)))
    return t


def _profiles(config: ExperimentConfig, title: str, scale: float = 1.0) -> ReportTable:
    """CED profiles ``D_tau`` for every design and shift; rows are ``design | delta=...``."""
    taus = np.asarray(config.taus, dtype=np.int64)
    cols = [str(int(x)) for x in taus]
    deltas = [d * scale for d in config.deltas]
    single = len(deltas) == 1
    t = _new_table(config, title, "chart", "tau", cols)
    for d in config.selected():
        spec, meta = resolve(d, config)
        t.metadata.setdefault("designs", {})[d.label] = {"spec": spec.label(), **meta}
        if not d.numeric:
            ests = mc.forked_estimates(spec, taus, deltas, config.profile_reps, config.seed)
        for j, delta in enumerate(config.deltas):
            row = d.label if single else f"{d.label} | delta={_fmt(delta)}"
            for i, c in enumerate(cols):
                if d.numeric:
                    t.set(row, c, Cell.exact(_numeric_ced(spec, deltas[j], int(taus[i])), "FiniteHorizonRecursion"))
                else:
                    e = ests[i, j]
                    if e.conditioned_fraction < mc.MIN_CONDITIONED_FRACTION:
                        raise ExperimentError(f"{row} tau={c}: change point unreachable")
                    t.set(row, c, Cell.from_estimate(_check(e, f"{row} tau={c}")))
    return t


# ---------------------------------------------------------------------------
# design catalogues
# ---------------------------------------------------------------------------

def _rrcusum(kind: str, wl: float, al: float) -> Design:
    rr = RunsRule.TWO_OF_TWO if kind == "2of2" else RunsRule.TWO_OF_THREE
    return Design(f"{kind} WL={_fmt(wl)} AL={'inf' if math.isinf(al) else _fmt(al)}",
                  ChartSpec(Family.RRCUSUM, k=0.5, warning_factor=wl, alarm_factor=al, rr_kind=rr))


def _cusum(k: float, h: float) -> Design:
    return Design(f"CUSUM k={_fmt(k)} h={_fmt(h)}", ChartSpec(Family.CUSUM, k=k, limit_factor=h))


def _ewma(lam: float, c: float | None = None, A: float | None = None, numeric: bool = False,
          label: str | None = None) -> Design:
    name = label or (f"EWMA lambda={_fmt(lam)}" + (f" c_E={_fmt(c)}" if c is not None else ""))
    if numeric:
        name += " [numeric]"
    return Design(name, ChartSpec(Family.EWMA, lam=lam, limit_factor=c), A, numeric)


def _table2_designs():
    return tuple(_rrcusum(*x) for x in [("2of2", 3.42, 4.8), ("2of2", 3.44, 4.6), ("2of2", 3.48, 4.4),
                                         ("2of2", 3.53, 4.2), ("2of3", 3.5, 4.44), ("2of3", 3.6, 4.19),
                                         ("2of3", 3.7, 4.08), ("2of3", 3.8, 4.03)])


def _table3_designs():
    rr = [("2of2", 3.42, math.inf), ("2of2", 3.44, 4.65), ("2of2", 3.48, 4.38), ("2of2", 3.53, 4.23),
          ("2of3", 3.5, 4.52), ("2of3", 3.6, 4.18), ("2of3", 3.7, 4.08), ("2of3", 3.8, 4.03)]
    cu = [(0.5, 4.002), (0.4933, 4.045), (0.49, 4.067), (0.48, 4.134)]
    return tuple(_rrcusum(*x) for x in rr) + tuple(_cusum(*x) for x in cu)


def _table4_designs():
    out = []
    for lam, ls, ce in [(0.1, 2.145, 2.2145), (0.25, 2.184, 2.6282), (0.5, 2.034, 2.7241), (0.75, 1.83, 2.7493)]:
        out.append(Design(f"2of2 EWMA lambda={_fmt(lam)} L_S={_fmt(ls)}",
                          ChartSpec(Family.RREWMA, lam=lam, limit_factor=ls, rr_kind=RunsRule.TWO_OF_TWO)))
        out.append(_ewma(lam, ce))
        out.append(_ewma(lam, ce, numeric=True))
    return tuple(out)


def _table5_designs():
    return (
        Design("2of3 EWMA lambda=0.1 L_S=2.158",
               ChartSpec(Family.RREWMA, lam=0.1, limit_factor=2.158, rr_kind=RunsRule.TWO_OF_THREE)),
        Design("modified 2of3 EWMA lambda=0.1 L_S=2.158",
               ChartSpec(Family.RREWMA, lam=0.1, limit_factor=2.158, rr_kind=RunsRule.MODIFIED_TWO_OF_THREE)),
        _ewma(0.1, 2.4098),
        _ewma(0.1, 2.4098, numeric=True),
    )


def _table6_designs(blocks=(2, 3, 4, 5, 6)):
    out = []
    for w2 in blocks:
        m = cal.match_ma_from_dma(w2)
        lam = round(m.lam, 3)
        out.append(Design(f"DMA w2={w2}", ChartSpec(Family.DMA, w=w2), 370.0))
        out.append(Design(f"MA w1={m.w1}", ChartSpec(Family.MA, w=m.w1), 370.0))
        out.append(_ewma(lam, A=370.0, numeric=True, label=f"EWMA lambda={_fmt(lam)}"))
    return tuple(out)


def _mec(lq: float) -> Design:
    return Design(f"MEC lambda_q={_fmt(lq)}", ChartSpec(Family.MEC, lam=lq, a_star=0.5), 170.0)


def _cusum_cal(k: float, A: float = 170.0) -> Design:
    return Design(f"CUSUM k={_fmt(k)}", ChartSpec(Family.CUSUM, k=k), A)


def _mec_designs(include_k05: bool = True):
    out = [_mec(0.1), _cusum_cal(round(cal.k_from_lambda(0.1, 0.5), 4)),
           _mec(0.25), _cusum_cal(round(cal.k_from_lambda(0.25, 0.5), 4))]
    if include_k05:
        out.append(_cusum_cal(0.5))
    return tuple(out)


def _dewma_designs(with_tewma: bool):
    out = []
    if with_tewma:
        out.append(Design("TEWMA lambda=0.13 L=1.91", ChartSpec(Family.TEWMA, lam=0.13, limit_factor=1.91)))
    out += [Design("DEWMA lambda=0.1", ChartSpec(Family.DEWMA, lam=0.1), 200.0),
            _ewma(0.05, A=200.0, label="EWMA lambda=0.05"),
            _ewma(0.05, A=200.0, numeric=True, label="EWMA lambda=0.05")]
    return tuple(out)


def _dpm_designs():
    return (Design("PM p=0.35 L_P=6.415", ChartSpec(Family.PM, p=0.35, limit_factor=6.415)),
            Design("DPM p=0.35 L_D=2.596", ChartSpec(Family.DPM, p=0.35, limit_factor=2.596)),
            _ewma(0.05, A=200.0, numeric=True, label="EWMA1 lambda=0.05"),
            _ewma(0.007, A=200.0, numeric=True, label="EWMA2 lambda=0.007"))


def _dpm_profile_designs():
    out = []
    for p in (0.2, 0.35, 0.5):
        if p == 0.35:
            out += [Design("PM p=0.35", ChartSpec(Family.PM, p=p, limit_factor=6.415)),
                    Design("DPM p=0.35", ChartSpec(Family.DPM, p=p, limit_factor=2.596))]
        else:
            out += [Design(f"PM p={_fmt(p)}", ChartSpec(Family.PM, p=p), 200.0),
                    Design(f"DPM p={_fmt(p)}", ChartSpec(Family.DPM, p=p), 200.0)]
    out.append(Design("EWMA lambda=0.05", ChartSpec(Family.EWMA, lam=0.05), 200.0))
    return tuple(out)


# ---------------------------------------------------------------------------
# experiment builders
# ---------------------------------------------------------------------------

def _build_table1(config: ExperimentConfig) -> list[ReportTable]:
    paper = _paper("table1")
    lams = config.options.get("lambdas", (0.1, 0.25, 0.5, 0.75, 1.0))
    cols = [_fmt(x) for x in lams]
    t = _new_table(config, "Reference values k and CUSUM thresholds h (A=170)", "quantity", "lambda_q", cols)
    for lq, c in zip(lams, cols):
        k = cal.k_from_lambda(lq, 0.5)
        t.set("k", c, Cell.exact(k, "ClosedForm", paper("k", c)))
        if config.rows is None or "h" in config.rows:
            d = Design(f"CUSUM k={k:.4f}", ChartSpec(Family.CUSUM, k=round(k, 4)), config.target_arl)
            spec, meta = resolve(d, config)
            t.set("h", c, Cell(spec.limit, meta["limit_stderr"], config.calibration_reps, "MonteCarloCalibration",
                               paper("h", c).text if paper("h", c) else None))
            t.metadata.setdefault("calibrations", {})[c] = meta
    return [t]


def _build_table2_alstar(config: ExperimentConfig) -> list[ReportTable]:
    paper = _paper("table2_alstar")
    t = _new_table(config, "Alarm limits AL* restoring A=168", "design", "quantity", ["AL*"])
    for kind, wl in [("2of2", 3.44), ("2of2", 3.48), ("2of2", 3.53), ("2of3", 3.5), ("2of3", 3.6),
                     ("2of3", 3.7), ("2of3", 3.8)]:
        row = f"{kind} WL={_fmt(wl)}"
        if config.rows is not None and row not in config.rows:
            continue
        rr = RunsRule.TWO_OF_TWO if kind == "2of2" else RunsRule.TWO_OF_THREE
        d = Design(row, ChartSpec(Family.RRCUSUM, k=0.5, warning_factor=wl, rr_kind=rr), config.target_arl)
        spec, meta = resolve(d, config)
        t.set(row, "AL*", Cell(spec.limit, meta["limit_stderr"], config.calibration_reps, "MonteCarloCalibration",
                               paper(row, "AL*").text if paper(row, "AL*") else None))
        t.metadata.setdefault("calibrations", {})[row] = meta
    return [t]


def _ewma_opt_lambda(delta: float, A: float, tau: int = mc.STEADY_STATE_TAU) -> tuple[float, float]:
    """EWMA smoothing constant minimizing the numeric ``D_tau`` at ``delta``."""
    def d100(loglam):
        lam = math.exp(loglam)
        c = cal.calibrate_ewma_numeric(lam, A)
        return analytic.ewma_ced_numeric(lam, c, delta, tau).value
    res = minimize_scalar(d100, bounds=(math.log(0.005), math.log(0.95)), method="bounded",
                          options={"xatol": 1e-3})
    return math.exp(res.x), float(res.fun)


def _initial_window(family: Family, lam: float) -> int:
    # window whose asymptotic variance matches the EWMA with the given lambda
    v = lam / (2.0 - lam)
    if family is Family.MA:
        return max(1, cal.round_half_away(1.0 / v))
    w = 1
    while analytic.dma_var(w + 1) > v:
        w += 1
    return w


def _build_optw(config: ExperimentConfig) -> list[ReportTable]:
    paper = _paper("table_optW")
    A = config.target_arl
    cols = [_fmt(d) for d in config.deltas]
    t = _new_table(config, "Windows and smoothing constants minimizing D100 (A=370)", "design", "delta", cols)
    target = cal.CalibrationTarget(A, config.options.get("optw_tolerance", 0.01),
                                   n_reps=config.options.get("optw_calibration_reps", 200_000))
    ranges = config.options.get("w_ranges", {})
    for delta, c in zip(config.deltas, cols):
        lam, d_ewma = _ewma_opt_lambda(delta, A)
        if config.rows is None or "EWMA lambda*" in config.rows:
            t.set("EWMA lambda*", c, Cell.exact(round(lam, 3), "NumericArgmin", paper("EWMA lambda*", c)))
            t.set("EWMA D100", c, Cell.exact(d_ewma, "FiniteHorizonRecursion"))
        for fam, row in ((Family.MA, "MA w1*"), (Family.DMA, "DMA w2*")):
            if config.rows is not None and row not in config.rows:
                continue
            rng = ranges.get((fam.value, _fmt(delta)))
            if rng is None:
                w0 = _initial_window(fam, lam)
                rng = range(max(1, w0 - 2), w0 + 3)
            prof = cal.optimize_window(fam, delta, rng, A, config.seed, target, config.profile_reps)
            t.set(row, c, Cell.exact(prof.best_w, "MonteCarloArgmin", paper(row, c)))
            best = prof.estimate(prof.best_w)
            t.set(f"{fam.value} D100", c, Cell.from_estimate(best))
            t.metadata.setdefault("profiles", {})[f"{fam.value} delta={c}"] = {
                "windows": list(prof.windows), "limits": list(prof.limits),
                "d100": [e.mean for e in prof.d100], "stderr": [e.stderr for e in prof.d100]}
    return [t]


def _build_mec_worst(config: ExperimentConfig) -> list[ReportTable]:
    x1 = np.asarray(config.options.get("x1_grid", np.round(np.arange(-4.0, 4.0001, 0.25), 10)))
    cols = ["zero-state"] + [_fmt(x) for x in x1]
    t = _new_table(config, "Delay conditioned on the first observation (tau=2)", "chart", "x1", cols)
    for d in config.selected():
        spec, meta = resolve(d, config)
        t.metadata.setdefault("designs", {})[d.label] = {"spec": spec.label(), **meta}
        for delta in config.deltas:
            row = f"{d.label} | delta={_fmt(delta)}"
            z = mc.zero_state_arl(spec, delta, config.reps, config.seed)
            t.set(row, "zero-state", Cell.from_estimate(_check(z, row)))
            prof = mc.conditional_delay_given_x1(spec, delta, x1, config.profile_reps, config.seed)
            for x, e in zip(x1, prof.estimates):
                if e is not None:
                    t.set(row, _fmt(x), Cell.from_estimate(_check(e, f"{row} x1={x}")))
            t.metadata.setdefault("rejected_x1", {})[row] = prof.rejected
    return [t]


def _build_arl_mec(config: ExperimentConfig) -> list[ReportTable]:
    cols = [_fmt(d) for d in config.deltas]
    t = _new_table(config, "Zero-state and steady-state ARL of MEC and CUSUM (A=170)", "chart", "delta", cols)
    for d in config.selected():
        spec, meta = resolve(d, config)
        t.metadata.setdefault("designs", {})[d.label] = {"spec": spec.label(), **meta}
        zs = mc.zero_state_table(spec, list(config.deltas), config.reps, config.seed)
        ss = mc.steady_state_table(spec, list(config.deltas), config.profile_reps, config.seed)
        for c, z, s in zip(cols, zs, ss):
            t.set(f"{d.label} | zero-state", c, Cell.from_estimate(_check(z, d.label)))
            t.set(f"{d.label} | steady-state", c, Cell.from_estimate(_check(s, d.label)))
    return [t]


def _build_madma_optim(config: ExperimentConfig) -> list[ReportTable]:
    A = config.target_arl
    target = cal.CalibrationTarget(A, config.options.get("optw_tolerance", 0.01),
                                   n_reps=config.options.get("optw_calibration_reps", 200_000))
    wmax = config.options.get("w_max", {"MA": 40, "DMA": 30})
    all_w = sorted(set(range(1, max(wmax.values()) + 1)))
    t = _new_table(config, "D100 versus window size (A=370)", "chart", "w", [str(w) for w in all_w])
    for fam in (Family.MA, Family.DMA):
        if config.rows is not None and fam.value not in config.rows:
            continue
        for w in range(1, wmax[fam.value] + 1):
            r = cal.calibrate_limit(ChartSpec(fam, w=w), target, config.seed)
            ests = mc.steady_state_table(r.spec, list(config.deltas), config.profile_reps, config.seed)
            for delta, e in zip(config.deltas, ests):
                t.set(f"{fam.value} | delta={_fmt(delta)}", str(w), Cell.from_estimate(_check(e, f"{fam.value} w={w}")))
            t.metadata.setdefault("limits", {})[f"{fam.value} w={w}"] = r.limit
    t.cols = [c for c in t.cols if any((r, c) in t.cells for r in t.rows)]
    return [t]


def _simple(kind: str, title: str, scale: float = 1.0):
    def build(config: ExperimentConfig) -> list[ReportTable]:
        if kind == "zero":
            return [_zero_state(config, title, scale)]
        if kind == "steady":
            return [_steady_state(config, title, scale)]
        return [_profiles(config, title, scale)]
    return build


def _d(*xs):
    return tuple(float(x) for x in xs)


EXPERIMENTS: dict[str, Experiment] = {}


def _register(eid, anchor, title, build, **defaults):
    EXPERIMENTS[eid] = Experiment(eid, anchor, title, build, lambda: dict(defaults))


_register("table1", "Table 1 (k from lambda_q; CUSUM h at A=170)", "Reference values k and thresholds h",
          _build_table1, deltas=_d(0), target_arl=170.0)
_register("table2", "Table 2 (RR-CUSUM, 1e8 rows)", "RR-CUSUM zero-state ARL",
          _simple("zero", "RR-CUSUM zero-state ARL"), designs=_table2_designs(),
          deltas=_d(0.25, 0.5, 0.75, 1, 1.5, 2))
_register("table2_alstar", "Table 2 (AL* column)", "RR-CUSUM alarm limits for A=168",
          _build_table2_alstar, deltas=_d(0), target_arl=168.0)
_register("table3", "Table 3 (RR-CUSUM vs CUSUM competition)", "RR-CUSUM and CUSUM zero-state ARL",
          _simple("zero", "RR-CUSUM and CUSUM zero-state ARL"), designs=_table3_designs(),
          deltas=_d(0.25, 0.5, 0.75, 1, 1.5, 2))
_register("table4", "Table 4 (2-of-2 EWMA vs standard EWMA)", "2-of-2 and standard EWMA zero-state ARL",
          _simple("zero", "2-of-2 and standard EWMA zero-state ARL"), designs=_table4_designs(),
          deltas=_d(0, 0.25, 0.5, 0.75, 1, 1.5, 2))
_register("table5", "Table 5 (2-of-3 EWMA, lambda=0.1)", "2-of-3 and standard EWMA zero-state ARL",
          _simple("zero", "2-of-3 and standard EWMA zero-state ARL"), designs=_table5_designs(),
          deltas=_d(0, 0.25, 0.5, 0.75, 1, 1.5, 2))
_register("table6", "Table 6 (DMA, MA, EWMA matched by variance; A=370)", "DMA/MA/EWMA zero-state ARL",
          _simple("zero", "DMA/MA/EWMA zero-state ARL"), designs=_table6_designs(),
          deltas=_d(0, 0.2, 0.4, 0.6, 0.8, 1, 1.25, 1.5, 2, 3))
_register("table_optW", "Table optW (D100-optimal w and lambda; A=370)", "D100-optimal designs",
          _build_optw, deltas=_d(0.6, 1.5), target_arl=370.0)
_register("table_dewma_zARL", "Table dewma_zARL (DEWMA vs EWMA zero-state; A=200)", "DEWMA/EWMA zero-state ARL",
          _simple("zero", "DEWMA/EWMA zero-state ARL (columns: delta/sqrt(5))", SQRT5),
          designs=_dewma_designs(False), deltas=_d(0, 0.1, 0.2, 0.3, 0.4, 0.5, 1, 1.5, 2))
_register("table_dewma_sARL", "Table dewma_sARL (steady-state D100; A=200)", "TEWMA/DEWMA/EWMA steady-state ARL",
          _simple("steady", "TEWMA/DEWMA/EWMA D100 (columns: delta/sqrt(5))", SQRT5),
          designs=_dewma_designs(True), deltas=_d(0.1, 0.2, 0.3, 0.4, 0.5, 1, 1.5, 2))
_register("table_dpm_zARL", "Table dpm_zARL (PM/DPM/EWMA zero-state; A=200)", "PM/DPM/EWMA zero-state ARL",
          _simple("zero", "PM/DPM/EWMA zero-state ARL"), designs=_dpm_designs(),
          deltas=_d(0, 0.25, 0.35, 0.5, 0.75, 1, 1.5, 2))
_register("fig_dtau05MEC", "Figure 1 (CED profiles, delta=0.5, A=170)", "MEC and CUSUM CED profiles",
          _simple("profile", "MEC and CUSUM CED profiles, delta=0.5"), designs=_mec_designs(),
          deltas=_d(0.5), taus=TAU_PROFILE)
_register("fig_dtau15MEC", "Figure 2 (CED profiles, delta=1.5, A=170)", "MEC and CUSUM CED profiles",
          _simple("profile", "MEC and CUSUM CED profiles, delta=1.5"), designs=_mec_designs(),
          deltas=_d(1.5), taus=TAU_PROFILE)
_register("fig_arlMEC", "Figure 3 (zero-/steady-state ARL vs delta, A=170)", "MEC and CUSUM ARL profiles",
          _build_arl_mec, designs=_mec_designs(False), deltas=_d(*np.round(np.arange(0.25, 2.001, 0.25), 10)))
_register("fig_MECworst", "Figure 4 (delay conditioned on X1=x1)", "Worst-case conditional delay",
          _build_mec_worst, designs=_mec_designs(False), deltas=_d(0.5, 0.75, 1))
_register("fig_madma_little", "Figure 5 (CED profiles DMA(6), MA(9), EWMA(0.202); A=370)",
          "DMA/MA/EWMA CED profiles", _simple("profile", "DMA/MA/EWMA CED profiles"),
          designs=(Design("DMA w2=6", ChartSpec(Family.DMA, w=6), 370.0),
                   Design("MA w1=9", ChartSpec(Family.MA, w=9), 370.0),
                   _ewma(0.202, A=370.0, label="EWMA lambda=0.202")),
          deltas=_d(0.6, 1, 2, 3), taus=TAU_PROFILE)
_register("fig_madma_optim", "Figure 6 (D100 vs w for MA and DMA; A=370)", "D100 versus window size",
          _build_madma_optim, deltas=_d(*np.round(np.arange(0.2, 2.001, 0.2), 10)), target_arl=370.0)
_register("fig_madmaewma_sARL", "Figure 7 (D100 vs delta for delta-optimal designs; A=370)",
          "Steady-state ARL of optimized MA/DMA/EWMA", _simple("steady", "D100 of optimized MA/DMA/EWMA"),
          designs=(Design("MA w1=20", ChartSpec(Family.MA, w=20), 370.0),
                   Design("DMA w2=12", ChartSpec(Family.DMA, w=12), 370.0),
                   _ewma(0.069, A=370.0, numeric=True, label="EWMA lambda=0.069"),
                   Design("MA w1=5", ChartSpec(Family.MA, w=5), 370.0),
                   Design("DMA w2=3", ChartSpec(Family.DMA, w=3), 370.0),
                   _ewma(0.255, A=370.0, numeric=True, label="EWMA lambda=0.255")),
          deltas=_d(*np.round(np.arange(0.2, 3.001, 0.2), 10)))
_register("fig_dewma_CED", "Figure 8 (CED profiles DEWMA(0.1) vs EWMA(0.05); A=200)", "DEWMA/EWMA CED profiles",
          _simple("profile", "DEWMA/EWMA CED profiles (delta/sqrt(5) in row labels)", SQRT5),
          designs=_dewma_designs(False)[:2], deltas=_d(0.2, 0.5, 1, 2), taus=TAU_PROFILE)
_register("fig_dpm_CED", "Figure 9 (CED profiles PM/DPM/EWMA; A=200)", "PM/DPM/EWMA CED profiles",
          _simple("profile", "PM/DPM/EWMA CED profiles"), designs=_dpm_profile_designs(),
          deltas=_d(0.35, 0.75, 1, 2), taus=TAU_PROFILE, calibration_tolerance=0.03)


def list_experiments() -> list[tuple[str, str]]:
    return [(e.experiment_id, e.anchor) for e in EXPERIMENTS.values()]


def default_config(experiment_id: str, **overrides) -> ExperimentConfig:
    if experiment_id not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment_id!r}; see list_experiments()")
    base = EXPERIMENTS[experiment_id].defaults()
    base.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(experiment_id=experiment_id, **base)


def run_experiment(config: ExperimentConfig) -> list[ReportTable]:
    """Run one experiment; every table is validated and stamped with provenance."""
    config.validate()
    exp = EXPERIMENTS[config.experiment_id]
    t0 = time.perf_counter()
    try:
        tables = exp.build(config)
    except (mc.CensoredRunError, mc.UnreachableChangePointError, cal.CalibrationError) as exc:
        raise ExperimentError(f"{config.experiment_id}: {exc}") from exc
    elapsed = time.perf_counter() - t0
    for t in tables:
        t.validate()
        t.metadata.update({
            "experiment": config.experiment_id, "anchor": exp.anchor, "master_seed": config.seed,
            "reps": config.reps, "profile_reps": config.profile_reps,
            "calibration_reps": config.calibration_reps, "calibration_tolerance": config.calibration_tolerance,
            "target_arl": config.target_arl, "deltas": list(config.deltas),
            "version": version_string(), "elapsed_seconds": round(elapsed, 3),
        })
    return tables
