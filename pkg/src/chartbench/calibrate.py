"""Design matching rules and calibration of limit factors to an in-control ARL."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from . import analytic, mc
from .charts import ChartSpec, Family, LimitPolicy, SpecError

logger = logging.getLogger(__name__)


class CalibrationError(RuntimeError):
    """No bracket found, or the Monte-Carlo noise never settled inside the tolerance."""


@dataclass(frozen=True)
class CalibrationTarget:
    in_control_arl: float
    tolerance: float = 0.0025
    max_iterations: int = 6
    n_reps: int = mc.DEFAULT_TABLE_REPS

    def __post_init__(self):
        if not self.in_control_arl > 1.0:
            raise ValueError("target ARL must exceed 1")
        if not self.tolerance > 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.n_reps < 1000:
            raise ValueError("n_reps must be >= 1000")


@dataclass(frozen=True)
class CalibrationResult:
    spec: ChartSpec
    limit: float
    achieved: mc.RunLengthEstimate
    iterations: int
    relative_error: float
    limit_stderr: float = math.nan
    history: tuple = field(default=())


# ---------------------------------------------------------------------------
# matching rules
# ---------------------------------------------------------------------------

def k_from_lambda(lambda_q: float, a_star: float) -> float:
    """CUSUM reference value matched to a MEC design: ``a* * sigma_Q(inf)``."""
    if a_star <= 0:
        raise ValueError("a* must be positive")
    return a_star * analytic.sigma_Q(lambda_q)


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


@dataclass(frozen=True)
class WindowMatch:
    sigma_D2: float
    w1: int
    lam: float


def match_ma_from_dma(w2: int) -> WindowMatch:
    """MA window and EWMA lambda with roughly the asymptotic variance of DMA(``w2``)."""
    if int(w2) != w2 or w2 < 1:
        raise ValueError("w2 must be an integer >= 1")
    v = analytic.dma_var(int(w2))
    return WindowMatch(v, round_half_away(1.0 / v), match_lambda_by_asymptotic_variance(v))


def match_lambda_by_asymptotic_variance(target_var: float) -> float:
    """Solve ``lambda / (2 - lambda) = v`` for lambda."""
    if not 0.0 < target_var <= 1.0:
        raise ValueError("target variance must lie in (0, 1]")
    return 2.0 * target_var / (1.0 + target_var)


# ---------------------------------------------------------------------------
# Monte-Carlo calibration
# ---------------------------------------------------------------------------

_BRACKET = (0.5, 6.0)
_GRID_POINTS = 41
_STAGE_REPS = (4_000, 40_000, 200_000)


def _floor(spec: ChartSpec) -> float:
    # the RR-CUSUM alarm limit has to stay above its warning limit
    if spec.family is Family.RRCUSUM:
        return spec.warning_factor * (1.0 + 1e-9)
    return 0.0


def _quick_arl(spec: ChartSpec, limit: float, n: int, seed, rep0: int, cap: int) -> float:
    """Cheap ARL estimate; capped runs count as ``cap`` so the value is a lower bound."""
    L = mc.run_lengths(spec.with_limit(limit), 0.0, n, seed, first_rep=rep0, cap=cap)
    L = np.where(L == 0, cap, L)
    return float(L.mean())


def _find_bracket(spec: ChartSpec, A: float, seed, rep0: int) -> tuple[float, float]:
    """Rough bracket from a coarse geometric search at small replication counts."""
    floor = _floor(spec)
    lo, hi = _BRACKET
    if floor > 0.0:
        lo, hi = floor, max(hi, 1.5 * floor)
    cap = int(50 * A)
    n = 1024
    for _ in range(12):
        if _quick_arl(spec, lo, n, seed, rep0, cap) < A:
            break
        if lo == floor:
            raise CalibrationError(f"{spec.label()}: ARL exceeds {A} even at the lowest admissible limit")
        lo /= 2.0
    else:
        raise CalibrationError(f"no lower bracket for {spec.label()}")
    for _ in range(12):
        if _quick_arl(spec, hi, n, seed, rep0, cap) > A:
            break
        lo, hi = hi, hi * 1.5
    else:
        raise CalibrationError(f"no upper bracket for {spec.label()}")
    # geometric bisection down to a ~10% wide bracket
    while hi / lo > 1.1:
        mid = math.sqrt(lo * hi)
        if _quick_arl(spec, mid, n, seed, rep0, cap) < A:
            lo = mid
        else:
            hi = mid
    return max(lo / 1.05, floor), hi * 1.05


def _grid_arl(spec: ChartSpec, grid: np.ndarray, n: int, seed, rep0: int, cap: int):
    c = mc._compile(spec)
    sums, cens = K.grid_run_length_sums(c.fam, c.par, c.sdt, grid, mc._seed(seed), int(rep0),
                                        int(n), int(cap), c.nstate)
    return sums.sum(axis=0), cens.sum(axis=0)


def _root_on_grid(grid: np.ndarray, arl: np.ndarray, A: float) -> float | None:
    above = np.nonzero(arl >= A)[0]
    if len(above) == 0 or above[0] == 0:
        return None
    j = above[0]
    x0, x1 = grid[j - 1], grid[j]
    y0, y1 = math.log(arl[j - 1]), math.log(arl[j])
    if y1 == y0:
        return float(0.5 * (x0 + x1))
    return float(x0 + (math.log(A) - y0) * (x1 - x0) / (y1 - y0))


def _log_slope(grid: np.ndarray, arl: np.ndarray, x: float) -> float:
    j = int(np.clip(np.searchsorted(grid, x), 1, len(grid) - 1))
    return (math.log(arl[j]) - math.log(arl[j - 1])) / (grid[j] - grid[j - 1])


def calibrate_limit(spec: ChartSpec, target: CalibrationTarget, seed=mc.DEFAULT_SEED) -> CalibrationResult:
    """Limit factor giving the in-control ARL ``target.in_control_arl``.

    A coarse stochastic bisection finds a bracket; the bracket is then refined
    in stages, each stage simulating one set of in-control paths that yields
    the run length for every limit on a grid at once (common random numbers,
    so the ARL curve is monotone in the limit). Replications grow
    geometrically from stage to stage. The root is verified with an
    independent block of replications; if it misses the tolerance band the
    final grid is re-run with fresh replications, pooled, and re-verified.
    """
    spec = spec.with_limit(None)
    A = target.in_control_arl
    plan = seed if isinstance(seed, mc.SeedPlan) else mc.SeedPlan(int(seed))
    seed_v = plan.master_seed
    rep = 0
    lo, hi = _find_bracket(spec, A, seed_v, rep)
    rep += 1024
    cap = int(200 * A) + 1000
    history = []
    stage_reps = [r for r in _STAGE_REPS if r < target.n_reps] + [target.n_reps]
    root = None
    sums = cens = None
    grid = None
    for si, n in enumerate(stage_reps):
        for _ in range(8):
            grid = np.linspace(lo, hi, _GRID_POINTS)
            sums, cens = _grid_arl(spec, grid, n, seed_v, rep, cap)
            rep += n
            arl = sums / n
            root = _root_on_grid(grid, arl, A)
            # heavy in-control tails: truncation at the cap biases the ARL low
            while root is not None and cens[np.searchsorted(grid, root)] > 0 and cap < mc.RUN_LENGTH_CAP:
                cap = min(cap * 10, mc.RUN_LENGTH_CAP)
                logger.debug("raising the calibration cap to %d", cap)
                sums, cens = _grid_arl(spec, grid, n, seed_v, rep, cap)
                rep += n
                arl = sums / n
                root = _root_on_grid(grid, arl, A)
            if root is not None and arl[-1] >= A:
                break
            width = hi - lo
            if arl[0] >= A:
                if lo <= _floor(spec):
                    raise CalibrationError(f"{spec.label()}: ARL exceeds {A} at the lowest admissible limit")
                lo, hi = max(lo - width, lo / 2.0, _floor(spec)), lo + 0.1 * width
            else:
                lo, hi = hi - 0.1 * width, hi + width
        else:
            raise CalibrationError(f"bracket lost while refining {spec.label()}")
        history.append((n, root))
        logger.debug("stage %d: n=%d root=%.6f", si, n, root)
        if si < len(stage_reps) - 1:
            # local slope of log ARL gives the limit uncertainty of this stage
            slope = _log_slope(grid, arl, root)
            half = max(8.0 / math.sqrt(n) / max(slope, 1e-9), 4 * (grid[1] - grid[0]))
            lo, hi = max(root - half, _floor(spec), 1e-9), root + half
    n_pool = stage_reps[-1]
    n_total = n_pool
    for it in range(1, target.max_iterations + 1):
        cand = spec.with_limit(root)
        L = mc.run_lengths(cand, 0.0, target.n_reps, seed_v, first_rep=rep)
        rep += target.n_reps
        est = mc._estimate_from_lengths(L)
        rel = (est.mean - A) / A
        history.append(("verify", root, est.mean, est.stderr))
        if est.censored:
            raise CalibrationError(f"censored runs while verifying {cand.label()}")
        if abs(rel) <= target.tolerance:
            slope = _log_slope(grid, sums / n_total, root)
            # verification noise mapped back onto the limit axis
            lim_se = (est.stderr / A) / slope if slope > 0 else math.nan
            return CalibrationResult(cand, root, est, it, rel, lim_se, tuple(history))
        # pool fresh replications on the final grid and re-estimate
        s2, c2 = _grid_arl(spec, grid, n_pool, seed_v, rep, cap)
        rep += n_pool
        sums = sums + s2
        cens = cens + c2
        n_total = n_pool * (it + 1)
        new_root = _root_on_grid(grid, sums / n_total, A)
        if new_root is None:
            raise CalibrationError(f"bracket lost while pooling for {spec.label()}")
        root = new_root
    raise CalibrationError(
        f"{spec.label()}: verified ARL {est.mean:.3f} +- {est.stderr:.3f} misses {A} "
        f"by more than {target.tolerance:.2%} after {target.max_iterations} iterations")


# ---------------------------------------------------------------------------
# deterministic calibration through the numeric backends
# ---------------------------------------------------------------------------

def _solve(fun, A: float, lo: float, hi: float) -> float:
    flo, fhi = fun(lo) - A, fun(hi) - A
    for _ in range(40):
        if flo < 0 < fhi:
            break
        if flo >= 0:
            lo /= 1.5
            flo = fun(lo) - A
        if fhi <= 0:
            hi *= 1.5
            fhi = fun(hi) - A
    else:
        raise CalibrationError("no bracket for the numeric calibration")
    return brentq(lambda x: fun(x) - A, lo, hi, xtol=1e-10, rtol=1e-12)


def calibrate_ewma_numeric(lam: float, A: float, policy: LimitPolicy | str = LimitPolicy.TIME_VARYING,
                           nodes: int = 200) -> float:
    """EWMA limit factor ``c_E`` with in-control ARL ``A`` from the integral-equation backend."""
    pol = LimitPolicy(policy).value
    return _solve(lambda c: analytic.ewma_arl_numeric(lam, c, 0.0, pol, nodes).value, A, 1.5, 4.0)


def calibrate_cusum_markov(k: float, A: float, grid_size: int = 400) -> float:
    """Two-sided CUSUM decision interval from the Markov-chain backend (approximate two-sided rule)."""
    return _solve(lambda h: analytic.cusum_arl_markov(k, h, 0.0, grid_size).value, A, 1.0, 8.0)


# ---------------------------------------------------------------------------
# window optimisation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowProfile:
    family: Family
    delta: float
    windows: tuple
    limits: tuple
    d100: tuple
    best_w: int

    def estimate(self, w: int) -> mc.RunLengthEstimate:
        return self.d100[self.windows.index(w)]


def optimize_window(family: Family | str, delta: float, w_range, A: float, seed=mc.DEFAULT_SEED,
                    calib: CalibrationTarget | None = None, n: int = mc.DEFAULT_PROFILE_REPS,
                    extend: bool = True) -> WindowProfile:
    """Window size minimizing ``D_100`` at shift ``delta`` among designs calibrated to ``A``.

    All windows share the same replications. If the best window sits on the
    boundary of ``w_range`` (and ``extend`` is set) the range grows on that side.
    """
    family = Family(family)
    if family not in (Family.MA, Family.DMA):
        raise SpecError("window optimisation applies to MA and DMA")
    calib = calib or CalibrationTarget(A)
    ws = sorted({int(w) for w in w_range})
    if not ws or ws[0] < 1:
        raise ValueError("window range must contain integers >= 1")
    results: dict[int, tuple[float, mc.RunLengthEstimate]] = {}

    def evaluate(w: int):
        if w in results:
            return
        cal = calibrate_limit(ChartSpec(family, w=w), calib, seed)
        est = mc.steady_state_table(cal.spec, [delta], n, seed)[0]
        results[w] = (cal.limit, est)
        logger.info("%s w=%d limit=%.5f D100=%.4f", family.value, w, cal.limit, est.mean)

    for w in ws:
        evaluate(w)
    while extend:
        keys = sorted(results)
        best = min(keys, key=lambda w: results[w][1].mean)
        if best == keys[0] and best > 1:
            evaluate(best - 1)
        elif best == keys[-1]:
            evaluate(best + 1)
        else:
            break
    keys = sorted(results)
    best = min(keys, key=lambda w: results[w][1].mean)
    return WindowProfile(family, delta, tuple(keys), tuple(results[w][0] for w in keys),
                         tuple(results[w][1] for w in keys), best)
