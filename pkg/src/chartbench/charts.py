"""Chart families as deterministic state machines.

Every chart watches standardized observations (in-control mean 0, sd 1).
``init_state``/``update``/``check_alarm`` form a plain-Python reference
implementation; the simulators in :mod:`chartbench._kernels` run the same
recursions compiled, and the test-suite checks the two against each other.
"""

from __future__ import annotations

import copy
import enum
import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import analytic


class Family(str, enum.Enum):
    EWMA = "EWMA"
    CUSUM = "CUSUM"
    MEC = "MEC"
    RRCUSUM = "RRCUSUM"
    RREWMA = "RREWMA"
    MA = "MA"
    DMA = "DMA"
    DEWMA = "DEWMA"
    TEWMA = "TEWMA"
    PM = "PM"
    DPM = "DPM"


class LimitPolicy(str, enum.Enum):
    TIME_VARYING = "TimeVarying"
    ASYMPTOTIC = "Asymptotic"


class RunsRule(str, enum.Enum):
    NONE = "None"
    TWO_OF_TWO = "TwoOfTwo"
    TWO_OF_THREE = "TwoOfThree"
    MODIFIED_TWO_OF_THREE = "ModifiedTwoOfThree"


class SpecError(ValueError):
    """Invalid or inconsistent chart design."""


LINEAR_FAMILIES = frozenset({Family.EWMA, Family.DEWMA, Family.TEWMA, Family.MA,
                             Family.DMA, Family.PM, Family.DPM})

# parameters each family takes besides the limit
_PARAMS = {
    Family.EWMA: {"lam"},
    Family.CUSUM: {"k"},
    Family.MEC: {"lam", "a_star"},
    Family.RRCUSUM: {"k", "warning_factor", "rr_kind"},
    Family.RREWMA: {"lam", "rr_kind"},
    Family.MA: {"w"},
    Family.DMA: {"w"},
    Family.DEWMA: {"lam"},
    Family.TEWMA: {"lam"},
    Family.PM: {"p"},
    Family.DPM: {"p"},
}
_OPTIONAL = ("lam", "k", "a_star", "w", "p", "warning_factor")
_POLICY_FAMILIES = {Family.EWMA, Family.MEC, Family.RREWMA, Family.MA, Family.DMA,
                    Family.DEWMA, Family.TEWMA}


@dataclass(frozen=True)
class ChartSpec:
    """One chart design: family, its parameters and the limit rule.

    ``limit_factor`` is the family's dimensionless threshold (c_E, h, b*, L_S,
    c_DE, L_P, L_D ...). The RR-CUSUM is the exception: its alarm limit lives
    in ``alarm_factor`` (``math.inf`` for a pure runs rule) next to the warning
    limit ``warning_factor``. A spec whose limit is still ``None`` can be
    calibrated but not simulated.
    """

    family: Family
    lam: float | None = None
    k: float | None = None
    a_star: float | None = None
    w: int | None = None
    p: float | None = None
    limit_factor: float | None = None
    warning_factor: float | None = None
    alarm_factor: float | None = None
    limit_policy: LimitPolicy = LimitPolicy.TIME_VARYING
    rr_kind: RunsRule = RunsRule.NONE
    mu0: float = 0.0
    sigma0: float = 1.0

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "limit_policy", LimitPolicy(self.limit_policy))
        object.__setattr__(self, "rr_kind", RunsRule(self.rr_kind))
        if self.mu0 != 0.0 or self.sigma0 != 1.0:
            raise SpecError("observations are standardized: mu0 must be 0 and sigma0 1")
        wanted = _PARAMS[fam]
        for name in _OPTIONAL:
            value = getattr(self, name)
            if name in wanted and value is None:
                raise SpecError(f"{fam.value} requires parameter {name!r}")
            if name not in wanted and value is not None:
                raise SpecError(f"parameter {name!r} is not used by {fam.value}")
        if "rr_kind" in wanted and self.rr_kind is RunsRule.NONE:
            raise SpecError(f"{fam.value} requires a runs rule")
        if "rr_kind" not in wanted and self.rr_kind is not RunsRule.NONE:
            raise SpecError(f"runs rules are not used by {fam.value}")
        if fam is Family.RRCUSUM:
            if self.rr_kind not in (RunsRule.TWO_OF_TWO, RunsRule.TWO_OF_THREE):
                raise SpecError("RR-CUSUM supports the 2-of-2 and 2-of-3 rules only")
            if self.limit_factor is not None:
                raise SpecError("RR-CUSUM uses alarm_factor, not limit_factor")
        elif self.alarm_factor is not None:
            raise SpecError(f"alarm_factor is not used by {fam.value}")
        if fam not in _POLICY_FAMILIES and self.limit_policy is not LimitPolicy.TIME_VARYING:
            raise SpecError(f"{fam.value} has no asymptotic limit variant")

        if self.lam is not None and not 0.0 < self.lam <= 1.0:
            raise SpecError("lambda must lie in (0, 1]")
        if self.k is not None and self.k < 0.0:
            raise SpecError("k must be >= 0")
        if self.a_star is not None and self.a_star < 0.0:
            raise SpecError("a* must be >= 0")
        if self.w is not None:
            if int(self.w) != self.w or self.w < 1:
                raise SpecError("window size must be an integer >= 1")
            object.__setattr__(self, "w", int(self.w))
        if self.p is not None and self.p < 0.0:
            raise SpecError("p must be >= 0")
        for name in ("limit_factor", "warning_factor", "alarm_factor"):
            value = getattr(self, name)
            if value is not None and not value > 0.0:
                raise SpecError(f"{name} must be positive")
        if (self.warning_factor is not None and self.alarm_factor is not None
                and not math.isinf(self.alarm_factor) and self.warning_factor >= self.alarm_factor):
            raise SpecError("warning limit must be below the alarm limit")

    @property
    def limit(self) -> float | None:
        """The calibratable threshold (``alarm_factor`` for RR-CUSUM)."""
        return self.alarm_factor if self.family is Family.RRCUSUM else self.limit_factor

    def with_limit(self, value: float | None) -> "ChartSpec":
        if self.family is Family.RRCUSUM:
            return replace(self, alarm_factor=value)
        return replace(self, limit_factor=value)

    @property
    def is_linear(self) -> bool:
        return self.family in LINEAR_FAMILIES

    def label(self) -> str:
        fam = self.family
        parts = []
        for name, short in (("lam", "lambda"), ("k", "k"), ("a_star", "a*"), ("w", "w"), ("p", "p"),
                            ("warning_factor", "WL")):
            value = getattr(self, name)
            if value is not None:
                parts.append(f"{short}={value:g}")
        lim = self.limit
        if lim is not None:
            parts.append(f"limit={lim:g}")
        if self.rr_kind is not RunsRule.NONE:
            parts.append(self.rr_kind.value)
        if self.limit_policy is LimitPolicy.ASYMPTOTIC:
            parts.append("asymptotic")
        return f"{fam.value}({', '.join(parts)})"


@dataclass(frozen=True)
class ChangePointModel:
    """Mean 0 before ``tau``, ``delta`` from ``tau`` on; unit sd throughout."""

    tau: float = 1
    delta: float = 0.0

    def __post_init__(self):
        if not (self.tau >= 1):
            raise ValueError("tau must be >= 1 (or inf)")
        if not math.isinf(self.tau):
            object.__setattr__(self, "tau", int(self.tau))

    def mean(self, t: int) -> float:
        return self.delta if t >= self.tau else 0.0


@dataclass
class ChartState:
    i: int = 0
    ewma_levels: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    cusum_pos: float = 0.0
    cusum_neg: float = 0.0
    window: deque = field(default_factory=deque)
    pm_sum: float = 0.0
    dpm_sum: float = 0.0
    rr_history: deque = field(default_factory=lambda: deque(maxlen=3))
    stat: float = 0.0

    def copy(self) -> "ChartState":
        return copy.deepcopy(self)


class Limits(NamedTuple):
    alarm: float
    warning: float | None = None
    reference: float | None = None


# ---------------------------------------------------------------------------
# standard deviations of the plotted statistics
# ---------------------------------------------------------------------------

def statistic_sd(spec: ChartSpec, i: float) -> float:
    """Standard deviation of the plotted statistic at time ``i`` (``inf`` for the limit)."""
    fam = spec.family
    if fam in (Family.EWMA, Family.RREWMA, Family.MEC):
        return analytic.ewma_sd(spec.lam, i)
    if fam is Family.DEWMA:
        return math.sqrt(analytic.dewma_var_inf(spec.lam) if math.isinf(i)
                         else analytic.dewma_var(spec.lam, int(i)))
    if fam is Family.TEWMA:
        return math.sqrt(_tewma_var_cached(spec.lam, i))
    if fam is Family.MA:
        return math.sqrt(analytic.ma_var(spec.w, i))
    if fam is Family.DMA:
        return math.sqrt(analytic.dma_var(spec.w, i))
    if fam is Family.PM:
        return 1.0 / math.sqrt(i)
    if fam is Family.DPM:
        return analytic.dpm_sd(int(i))
    raise SpecError(f"{fam.value} has no plotted-statistic variance")


@lru_cache(maxsize=64)
def _tewma_var_cached(lam: float, i: float) -> float:
    if math.isinf(i):
        return analytic.tewma_var_inf(lam)
    return analytic.tewma_var(lam, int(i))


def _limit_sd(spec: ChartSpec, i: int) -> float:
    if spec.limit_policy is LimitPolicy.ASYMPTOTIC:
        return statistic_sd(spec, math.inf)
    return statistic_sd(spec, i)


def _require_limit(spec: ChartSpec) -> float:
    if spec.limit is None:
        raise SpecError(f"{spec.family.value} design has no limit yet; calibrate it first")
    return spec.limit


def alarm_threshold(spec: ChartSpec, i: int) -> Limits:
    """Time-``i`` threshold(s) of the chart; compare ``|statistic|`` against ``alarm``."""
    if i < 1:
        raise ValueError("time index must be >= 1")
    fam = spec.family
    if fam is Family.CUSUM:
        return Limits(_require_limit(spec))
    if fam is Family.RRCUSUM:
        return Limits(_require_limit(spec), warning=spec.warning_factor)
    if fam is Family.MEC:
        sd = _limit_sd(spec, i)
        return Limits(_require_limit(spec) * sd, reference=spec.a_star * sd)
    if fam is Family.RREWMA:
        return Limits(math.inf, warning=_require_limit(spec) * _limit_sd(spec, i))
    if fam is Family.PM:
        return Limits(_require_limit(spec) / math.sqrt(i) / i ** spec.p)
    if fam is Family.DPM:
        return Limits(_require_limit(spec) * analytic.dpm_sd(i) / i ** spec.p)
    return Limits(_require_limit(spec) * _limit_sd(spec, i))


# ---------------------------------------------------------------------------
# reference state machine
# ---------------------------------------------------------------------------

def init_state(spec: ChartSpec) -> ChartState:
    window_len = 2 * spec.w - 1 if spec.family in (Family.MA, Family.DMA) else 0
    return ChartState(window=deque(maxlen=max(window_len, 1)))


def _moving_means(xs: list, w: int, i: int) -> list:
    """``M_j`` for ``j = i-len(xs)+1 .. i`` using the expanding start for ``j < w``."""
    out = []
    first = i - len(xs) + 1
    for j in range(max(first, i - w + 1), i + 1):
        lo = max(1, j - w + 1)
        vals = xs[lo - first:j - first + 1]
        out.append(sum(vals) / min(j, w))
    return out


def update(spec: ChartSpec, state: ChartState, x: float) -> ChartState:
    """Advance the chart by one observation; the input state is left untouched."""
    s = state.copy()
    s.i += 1
    i = s.i
    fam = spec.family
    lam = spec.lam
    if fam in (Family.EWMA, Family.RREWMA, Family.MEC, Family.DEWMA, Family.TEWMA):
        z = s.ewma_levels
        z[0] = (1.0 - lam) * z[0] + lam * x
        if fam in (Family.DEWMA, Family.TEWMA):
            z[1] = (1.0 - lam) * z[1] + lam * z[0]
        if fam is Family.TEWMA:
            z[2] = (1.0 - lam) * z[2] + lam * z[1]
        s.stat = z[{Family.DEWMA: 1, Family.TEWMA: 2}.get(fam, 0)]
    if fam is Family.MEC:
        a = spec.a_star * _limit_sd(spec, i)
        q = s.ewma_levels[0]
        s.cusum_pos = max(0.0, s.cusum_pos + q - a)
        s.cusum_neg = max(0.0, s.cusum_neg - q - a)
        s.stat = max(s.cusum_pos, s.cusum_neg)
    elif fam in (Family.CUSUM, Family.RRCUSUM):
        s.cusum_pos = max(0.0, s.cusum_pos + x - spec.k)
        s.cusum_neg = max(0.0, s.cusum_neg - x - spec.k)
        s.stat = max(s.cusum_pos, s.cusum_neg)
    elif fam in (Family.MA, Family.DMA):
        s.window.append(x)
        ms = _moving_means(list(s.window), spec.w, i)
        if fam is Family.MA:
            s.stat = ms[-1]
        else:
            s.stat = sum(ms) / min(i, spec.w)
    elif fam in (Family.PM, Family.DPM):
        s.pm_sum += x
        s.dpm_sum += s.pm_sum / i
        s.stat = s.pm_sum / i if fam is Family.PM else s.dpm_sum / i

    if fam is Family.RRCUSUM:
        wl, al = spec.warning_factor, _require_limit(spec)
        s.rr_history.append((_cusum_zone(s.cusum_pos, wl, al), _cusum_zone(s.cusum_neg, wl, al)))
    elif fam is Family.RREWMA:
        s.rr_history.append(_ewma_zone(s.stat, alarm_threshold(spec, i).warning))
    return s


def _cusum_zone(c: float, wl: float, al: float) -> int:
    if c > al:
        return 2
    return 1 if c > wl else 0


def _ewma_zone(z: float, warn: float) -> int:
    """+2 above the upper warning limit, +1 between CL and it, 0 on CL, mirrored below."""
    if z > warn:
        return 2
    if z < -warn:
        return -2
    if z > 0.0:
        return 1
    if z < 0.0:
        return -1
    return 0


def check_alarm(spec: ChartSpec, state: ChartState) -> bool:
    if state.i < 1:
        raise ValueError("no observation processed yet")
    fam = spec.family
    lim = alarm_threshold(spec, state.i)
    if fam is Family.RRCUSUM:
        if state.stat > lim.alarm:
            return True
        n = 2 if spec.rr_kind is RunsRule.TWO_OF_TWO else 3
        recent = list(state.rr_history)[-n:]
        return any(sum(1 for zones in recent if zones[side] == 1) >= 2 for side in (0, 1))
    if fam is Family.RREWMA:
        n = 2 if spec.rr_kind is RunsRule.TWO_OF_TWO else 3
        # points before time 1 sit on the centre line
        hist = list(state.rr_history)[-n:]
        recent = [0] * (n - len(hist)) + hist
        for sign in (1, -1):
            codes = [sign * c for c in recent]
            if sum(1 for c in codes if c == 2) < 2:
                continue
            if spec.rr_kind is RunsRule.MODIFIED_TWO_OF_THREE and min(codes) < 0:
                continue
            return True
        return False
    return abs(state.stat) > lim.alarm


def weight_vector(spec: ChartSpec, i: int) -> np.ndarray:
    """Coefficients ``c_1..c_i`` with statistic ``= sum_j c_j X_j`` (linear families only)."""
    if not spec.is_linear:
        raise SpecError(f"{spec.family.value} is not a linear statistic")
    if i < 1:
        raise ValueError("time index must be >= 1")
    fam = spec.family
    lags = np.arange(i - 1, -1, -1, dtype=float)  # i - j for j = 1..i
    if fam is Family.EWMA:
        return spec.lam * (1.0 - spec.lam) ** lags
    if fam is Family.DEWMA:
        return spec.lam ** 2 * (lags + 1.0) * (1.0 - spec.lam) ** lags
    if fam is Family.TEWMA:
        return analytic.tewma_weights(spec.lam, i)[::-1].copy()
    if fam is Family.MA:
        c = np.zeros(i)
        m = min(i, spec.w)
        c[i - m:] = 1.0 / m
        return c
    if fam is Family.DMA:
        return analytic.dma_weights(spec.w, i)
    if fam is Family.PM:
        return np.full(i, 1.0 / i)
    return analytic.dpm_weights(i)


def run_chart(spec: ChartSpec, xs) -> int | None:
    """Feed observations through the reference machine; first alarm time or ``None``."""
    state = init_state(spec)
    for x in xs:
        state = update(spec, state, float(x))
        if check_alarm(spec, state):
            return state.i
    return None
