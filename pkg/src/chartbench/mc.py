"""Monte-Carlo run-length estimation under the change-point model.

All estimators share one reproducibility contract: replication ``r`` of a
study seeded with ``seed`` always sees the same noise sequence, whichever
chart, shift, change point or thread count is used (common random numbers).
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np

from . import _kernels as K
from . import analytic
from .charts import ChangePointModel, ChartSpec, Family, LimitPolicy, RunsRule, SpecError

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20211027
RUN_LENGTH_CAP = 10_000_000
DEFAULT_TABLE_REPS = 1_000_000
DEFAULT_PROFILE_REPS = 200_000
PAPER_SCALE_REPS = 100_000_000
STEADY_STATE_TAU = 100
MIN_CONDITIONED_FRACTION = 1e-3

_FAMILY_CODE = {
    Family.EWMA: K.EWMA, Family.CUSUM: K.CUSUM, Family.MEC: K.MEC, Family.RRCUSUM: K.RRCUSUM,
    Family.RREWMA: K.RREWMA, Family.MA: K.MA, Family.DMA: K.DMA, Family.DEWMA: K.DEWMA,
    Family.TEWMA: K.TEWMA, Family.PM: K.PM, Family.DPM: K.DPM,
}
_RR_CODE = {RunsRule.NONE: K.RR_NONE, RunsRule.TWO_OF_TWO: K.RR_2OF2,
            RunsRule.TWO_OF_THREE: K.RR_2OF3, RunsRule.MODIFIED_TWO_OF_THREE: K.RR_MOD2OF3}


class CensoredRunError(RuntimeError):
    """A replication hit the run-length cap without signalling."""


class UnreachableChangePointError(RuntimeError):
    """Too few replications survive to the change point."""


@dataclass(frozen=True)
class SeedPlan:
    master_seed: int = DEFAULT_SEED
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError("master seed must be a 64-bit unsigned integer")
        if self.stream_index < 0:
            raise ValueError("stream index must be >= 0")


@dataclass(frozen=True)
class RunLengthEstimate:
    mean: float
    stderr: float
    replications: int
    conditioned_fraction: float = 1.0
    censored: int = 0
    sd: float = math.nan
    notes: tuple = field(default=())

    @property
    def valid(self) -> bool:
        return self.censored == 0 and self.replications > 0

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "replications": self.replications,
                "conditioned_fraction": self.conditioned_fraction, "censored": self.censored,
                "sd": self.sd, "notes": list(self.notes)}

    @classmethod
    def from_dict(cls, d: dict) -> "RunLengthEstimate":
        d = dict(d)
        d["notes"] = tuple(d.get("notes", ()))
        return cls(**d)


def set_threads(n: int | None) -> int:
    """Set the simulator's worker count (default: ``RL_THREADS`` or all cores)."""
    if n is None:
        env = os.environ.get("RL_THREADS")
        n = int(env) if env else numba.config.NUMBA_NUM_THREADS
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


# ---------------------------------------------------------------------------
# spec -> kernel arguments
# ---------------------------------------------------------------------------

def _table_length(lam: float, extra: int = 0) -> int:
    if lam >= 1.0:
        return 2
    return int(math.ceil(80.0 / -math.log((1.0 - lam) ** 2))) + 50 + extra


def sd_table(spec: ChartSpec) -> np.ndarray:
    """``sd[i]`` of the limit-scaling statistic for ``i = 1..len-1``; the last entry repeats."""
    fam = spec.family
    if fam in (Family.CUSUM, Family.RRCUSUM, Family.PM, Family.DPM):
        return np.ones(2)
    if fam in (Family.EWMA, Family.RREWMA, Family.MEC):
        n = _table_length(spec.lam)
        i = np.arange(n, dtype=float)
        var = (1.0 - (1.0 - spec.lam) ** (2 * i)) * spec.lam / (2.0 - spec.lam)
        var_inf = spec.lam / (2.0 - spec.lam)
    elif fam is Family.DEWMA:
        n = _table_length(spec.lam, 50)
        var = np.array([1.0] + [analytic.dewma_var(spec.lam, j) for j in range(1, n)])
        var_inf = analytic.dewma_var_inf(spec.lam)
    elif fam is Family.TEWMA:
        n = _table_length(spec.lam, 100)
        c = analytic.tewma_weights(spec.lam, n)
        var = np.concatenate([[1.0], np.cumsum(c * c)[: n - 1]])
        var_inf = analytic.tewma_var_inf(spec.lam)
    elif fam is Family.MA:
        n = spec.w + 1
        var = np.array([1.0] + [analytic.ma_var(spec.w, j) for j in range(1, n)])
        var_inf = analytic.ma_var(spec.w)
    elif fam is Family.DMA:
        n = 2 * spec.w
        var = np.array([1.0] + [analytic.dma_var(spec.w, j) for j in range(1, n)])
        var_inf = analytic.dma_var(spec.w)
    else:  # pragma: no cover
        raise SpecError(f"no sd table for {fam}")
    if spec.limit_policy is LimitPolicy.ASYMPTOTIC:
        var = np.full_like(var, var_inf)
    var[0] = 1.0
    return np.sqrt(var)


@dataclass(frozen=True)
class _Compiled:
    fam: int
    par: np.ndarray
    sdt: np.ndarray
    nstate: int


@lru_cache(maxsize=256)
def _compile(spec: ChartSpec) -> _Compiled:
    par = np.zeros(8)
    par[0] = spec.lam if spec.lam is not None else 0.0
    par[1] = spec.k if spec.k is not None else 0.0
    par[2] = spec.a_star if spec.a_star is not None else 0.0
    par[3] = spec.w if spec.w is not None else 1
    par[4] = spec.p if spec.p is not None else 0.0
    par[5] = spec.warning_factor if spec.warning_factor is not None else 0.0
    par[6] = _RR_CODE[spec.rr_kind]
    nstate = K.STATE_BASE + 2 * (spec.w or 0)
    return _Compiled(_FAMILY_CODE[spec.family], par, sd_table(spec), nstate)


def _limit(spec: ChartSpec) -> float:
    lim = spec.limit
    if lim is None:
        raise SpecError(f"{spec.label()} has no limit; calibrate it first")
    return float(lim)


def _seed(seed) -> np.uint64:
    plan = seed if isinstance(seed, SeedPlan) else SeedPlan(int(seed))
    return np.uint64(plan.master_seed)


# ---------------------------------------------------------------------------
# primitive runs
# ---------------------------------------------------------------------------

def run_lengths(spec: ChartSpec, delta: float = 0.0, n: int = 1000, seed=DEFAULT_SEED, tau: int = 1,
                first_rep: int = 0, x1: float | None = None, cap: int = RUN_LENGTH_CAP) -> np.ndarray:
    """Raw run lengths ``L`` (counted from time 1) of ``n`` replications; 0 marks a capped run."""
    c = _compile(spec)
    return K.run_lengths(c.fam, c.par, c.sdt, _limit(spec), _seed(seed), int(first_rep), int(n),
                         int(tau), float(delta), float(x1 or 0.0), x1 is not None, int(cap), c.nstate)


def sample_run_length(spec: ChartSpec, model: ChangePointModel, rng_stream: SeedPlan,
                      cap: int = RUN_LENGTH_CAP) -> int:
    """Alarm time of a single replication identified by ``rng_stream``."""
    tau = cap + 1 if math.isinf(model.tau) else model.tau
    L = int(run_lengths(spec, model.delta, 1, rng_stream, tau=tau,
                        first_rep=rng_stream.stream_index, cap=cap)[0])
    if L == 0:
        raise CensoredRunError(f"{spec.label()} did not signal within {cap} observations")
    return L


def _estimate(count: int, total: int, total_sq: int, censored: int, fraction: float = 1.0,
              notes=()) -> RunLengthEstimate:
    if count == 0:
        return RunLengthEstimate(math.nan, math.nan, 0, fraction, censored, notes=tuple(notes))
    mean = total / count
    if count > 1:
        var = (total_sq - total * total / count) / (count - 1)
        sd = math.sqrt(max(var, 0.0))
    else:
        sd = math.nan
    notes = tuple(notes)
    if censored:
        notes += (f"{censored} replications censored at the run-length cap",)
    return RunLengthEstimate(mean, sd / math.sqrt(count), count, fraction, censored, sd, notes)


def _estimate_from_lengths(L: np.ndarray, tau: int = 1, n_started: int | None = None,
                           notes=()) -> RunLengthEstimate:
    censored = int(np.count_nonzero(L == 0))
    d = L[L >= tau] - (tau - 1)
    total = int(d.sum())
    total_sq = int(np.dot(d, d))
    started = n_started if n_started is not None else len(L)
    frac = (len(d) + censored) / started if started else math.nan
    return _estimate(len(d), total, total_sq, censored, frac, notes)


def _forked_raw(spec: ChartSpec, taus: np.ndarray, deltas: np.ndarray, n: int, seed, x1, first_rep: int,
                cap: int):
    c = _compile(spec)
    cnt, sm, sq, cens = K.forked_delays(c.fam, c.par, c.sdt, _limit(spec), _seed(seed), int(first_rep),
                                        int(n), taus, deltas, float(x1 or 0.0), x1 is not None,
                                        int(cap), c.nstate)
    # exact integer pooling over blocks; squares may exceed int64 when summed
    return (cnt.sum(axis=0), sm.sum(axis=0), sq.astype(object).sum(axis=0), cens.sum(axis=0))


def _check_grids(taus, deltas):
    taus = np.asarray(taus, dtype=np.int64)
    if taus.ndim != 1 or len(taus) == 0 or np.any(taus < 1) or np.any(np.diff(taus) <= 0):
        raise ValueError("taus must be a strictly increasing sequence of integers >= 1")
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 1 or len(deltas) == 0:
        raise ValueError("need at least one shift")
    return taus, deltas


def _estimates(raw, n_started: int) -> np.ndarray:
    cnt, sm, sq, cens = raw
    out = np.empty(cnt.shape, dtype=object)
    for idx in np.ndindex(cnt.shape):
        c, z = int(cnt[idx]), int(cens[idx])
        out[idx] = _estimate(c, int(sm[idx]), int(sq[idx]), z, (c + z) / n_started)
    return out


def forked_estimates(spec: ChartSpec, taus, deltas, n: int, seed=DEFAULT_SEED, x1: float | None = None,
                     first_rep: int = 0, cap: int = RUN_LENGTH_CAP) -> np.ndarray:
    """CED estimates for every ``(tau, delta)`` pair, sharing the in-control prefix of each path.

    ``n`` replications are started. Returns an object array of
    :class:`RunLengthEstimate` with shape ``(len(taus), len(deltas))``.
    """
    taus, deltas = _check_grids(taus, deltas)
    return _estimates(_forked_raw(spec, taus, deltas, n, seed, x1, first_rep, cap), n)


def conditioned_estimates(spec: ChartSpec, tau: int, deltas, n_conditioned: int, seed=DEFAULT_SEED,
                          x1: float | None = None, cap: int = RUN_LENGTH_CAP) -> list[RunLengthEstimate]:
    """Like :func:`forked_estimates` for a single ``tau``, but keeps adding replications
    until at least ``n_conditioned`` of them survive to ``tau``."""
    taus, deltas = _check_grids([tau], deltas)
    started, total = 0, None
    chunk = int(n_conditioned)
    while True:
        raw = _forked_raw(spec, taus, deltas, chunk, seed, x1, started, cap)
        total = raw if total is None else tuple(a + b for a, b in zip(total, raw))
        started += chunk
        survivors = int(total[0][0, 0] + total[3][0, 0])
        frac = survivors / started
        if frac < MIN_CONDITIONED_FRACTION:
            raise UnreachableChangePointError(
                f"only {frac:.2e} of runs of {spec.label()} survive to tau={tau}")
        if survivors >= n_conditioned:
            return list(_estimates(total, started)[0])
        chunk = max(K.BLOCK, int(math.ceil((n_conditioned - survivors) / frac * 1.02)))


# ---------------------------------------------------------------------------
# public estimators
# ---------------------------------------------------------------------------

def zero_state_arl(spec: ChartSpec, delta: float = 0.0, n_reps: int = DEFAULT_TABLE_REPS,
                   seed=DEFAULT_SEED) -> RunLengthEstimate:
    """Zero-state ARL (change at ``tau = 1``; ``delta = 0`` gives the in-control ARL)."""
    if n_reps < 1000:
        raise ValueError("n_reps must be >= 1000")
    return _estimate_from_lengths(run_lengths(spec, delta, n_reps, seed))


def zero_state_table(spec: ChartSpec, deltas, n_reps: int = DEFAULT_TABLE_REPS,
                     seed=DEFAULT_SEED) -> list[RunLengthEstimate]:
    """Zero-state ARL for several shifts with common random numbers."""
    if n_reps < 1000:
        raise ValueError("n_reps must be >= 1000")
    return list(forked_estimates(spec, [1], deltas, n_reps, seed)[0])


def ced(spec: ChartSpec, model: ChangePointModel, n_surviving_target: int = DEFAULT_PROFILE_REPS,
        seed=DEFAULT_SEED) -> RunLengthEstimate:
    """Conditional expected delay ``E(L - tau + 1 | L >= tau)`` by rejection.

    Replications are consumed in index order, in chunks, until at least
    ``n_surviving_target`` of them survive to ``tau``.
    """
    tau = model.tau
    if math.isinf(tau) or tau < 1:
        raise ValueError("ced needs a finite change point tau >= 1")
    target = int(n_surviving_target)
    if target < 1:
        raise ValueError("n_surviving_target must be >= 1")
    lengths = []
    started = 0
    survivors = 0
    chunk = target
    while survivors < target:
        L = run_lengths(spec, model.delta, chunk, seed, tau=tau, first_rep=started)
        lengths.append(L)
        started += chunk
        survivors += int(np.count_nonzero((L >= tau) | (L == 0)))
        frac = survivors / started
        if frac < MIN_CONDITIONED_FRACTION:
            raise UnreachableChangePointError(
                f"only {frac:.2e} of runs of {spec.label()} survive to tau={tau}")
        chunk = max(K.BLOCK, int(math.ceil((target - survivors) / frac * 1.05)))
    est = _estimate_from_lengths(np.concatenate(lengths), tau, started)
    if model.delta == 0.0 and tau > 1:
        est = RunLengthEstimate(**{**est.__dict__, "notes": est.notes + ("in-control CED: informational only",)})
    return est


def ced_profile(spec: ChartSpec, delta: float, tau_max: int = STEADY_STATE_TAU,
                n: int = DEFAULT_PROFILE_REPS, seed=DEFAULT_SEED) -> list[RunLengthEstimate]:
    """``D_tau`` for ``tau = 1..tau_max`` from ``n`` shared replications."""
    if tau_max < 1:
        raise ValueError("tau_max must be >= 1")
    est = list(forked_estimates(spec, np.arange(1, tau_max + 1), [delta], n, seed)[:, 0])
    for tau, e in enumerate(est, start=1):
        if e.conditioned_fraction < MIN_CONDITIONED_FRACTION:
            raise UnreachableChangePointError(f"tau={tau} reached by {e.conditioned_fraction:.2e} of runs")
    return est


def steady_state_arl(spec: ChartSpec, delta: float, n: int = DEFAULT_PROFILE_REPS,
                     seed=DEFAULT_SEED) -> RunLengthEstimate:
    """``D_100`` as the conditional steady-state ARL proxy."""
    return ced(spec, ChangePointModel(STEADY_STATE_TAU, delta), n, seed)


def steady_state_table(spec: ChartSpec, deltas, n: int = DEFAULT_PROFILE_REPS, seed=DEFAULT_SEED,
                       tau: int = STEADY_STATE_TAU) -> list[RunLengthEstimate]:
    """``D_tau`` for several shifts from at least ``n`` paths surviving to ``tau``.

    Each surviving path is forked once per shift (common random numbers).
    """
    return conditioned_estimates(spec, tau, deltas, n, seed)


@dataclass
class DelayProfile:
    """Conditional delays ``l(x1) = E_2(L - 1 | X_1 = x1)`` over a grid of first observations."""

    x1: np.ndarray
    estimates: list
    rejected: list

    def means(self) -> np.ndarray:
        return np.array([e.mean if e is not None else math.nan for e in self.estimates])

    def stderrs(self) -> np.ndarray:
        return np.array([e.stderr if e is not None else math.nan for e in self.estimates])


def conditional_delay_given_x1(spec: ChartSpec, delta: float, x1_grid, n: int = DEFAULT_PROFILE_REPS,
                               seed=DEFAULT_SEED) -> DelayProfile:
    """Delay after a change at ``tau = 2`` when the first observation is pinned to ``x1``.

    Grid points that make the chart signal at time 1 are rejected (estimate ``None``).
    """
    grid = np.asarray(x1_grid, dtype=float)
    c = _compile(spec)
    limit = _limit(spec)
    estimates, rejected = [], []
    for x in grid:
        st = np.zeros(c.nstate)
        s, ev = K.chart_step(c.fam, c.par, c.sdt, st, 1, float(x))
        if ev or s > limit:
            estimates.append(None)
            rejected.append(float(x))
            continue
        estimates.append(conditioned_estimates(spec, 2, [delta], n, seed, x1=float(x))[0])
    return DelayProfile(grid, estimates, rejected)
