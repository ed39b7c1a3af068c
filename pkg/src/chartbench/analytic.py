"""Closed-form variances and deterministic ARL backends.

The numeric ARL routines are independent of the Monte-Carlo engine and serve
as its oracles: a Brook-Evans Markov chain for the CUSUM, and a Nystroem
(Gauss-Legendre) discretisation of the EWMA run-length recursion that also
handles the time-varying limits exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import ndtr

EULER_GAMMA = 0.57721566490153286061


class ArlMethod(str, enum.Enum):
    MARKOV_CHAIN = "MarkovChain"
    FINITE_HORIZON = "FiniteHorizonRecursion"
    CLOSED_FORM = "ClosedForm"


@dataclass(frozen=True)
class NumericArlResult:
    value: float
    method: ArlMethod
    grid_size: int = 0
    horizon: int = 0
    est_truncation_error: float = 0.0
    approximate: bool = False

    def __float__(self) -> float:
        return self.value


class NumericArlError(RuntimeError):
    """A deterministic ARL backend failed (singular system, horizon exhausted)."""


def _check_lambda(lam: float) -> None:
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"smoothing constant must lie in (0, 1], got {lam}")


# ---------------------------------------------------------------------------
# variances of the plotted statistics
# ---------------------------------------------------------------------------

def ewma_sd(lam: float, i: float = math.inf) -> float:
    """Standard deviation of ``Z_i`` for unit-variance input; ``i=inf`` gives the limit."""
    _check_lambda(lam)
    if math.isinf(i):
        return math.sqrt(lam / (2.0 - lam))
    if i < 1:
        raise ValueError("i must be >= 1")
    return math.sqrt((1.0 - (1.0 - lam) ** (2 * i)) * lam / (2.0 - lam))


def sigma_Q(lambda_q: float, i: float = math.inf) -> float:
    """Standard deviation of the MEC input EWMA ``Q_i`` (same formula as the EWMA)."""
    return ewma_sd(lambda_q, i)


def dewma_var(lam: float, i: int) -> float:
    """Exact variance of the double EWMA statistic at time ``i``."""
    _check_lambda(lam)
    if i < 1:
        raise ValueError("i must be >= 1")
    lb = 1.0 - lam
    if lb == 0.0:
        return 1.0
    l2 = lb * lb
    num = (1.0 + l2 - (i * i + 2 * i + 1) * l2 ** i
           + (2 * i * i + 2 * i - 1) * l2 ** (i + 1) - i * i * l2 ** (i + 2))
    return lam ** 4 * num / (1.0 - l2) ** 3


def dewma_var_inf(lam: float) -> float:
    _check_lambda(lam)
    l2 = (1.0 - lam) ** 2
    return lam ** 4 * (1.0 + l2) / (1.0 - l2) ** 3


def tewma_weights(lam: float, n: int) -> np.ndarray:
    """Triple-EWMA weights by lag: entry ``m`` multiplies ``X_{i-m}``."""
    _check_lambda(lam)
    m = np.arange(n, dtype=float)
    return lam ** 3 * (m + 1.0) * (m + 2.0) / 2.0 * (1.0 - lam) ** m


def tewma_var(lam: float, i: int) -> float:
    """Variance of the triple EWMA statistic as the sum of its squared weights."""
    if i < 1:
        raise ValueError("i must be >= 1")
    c = tewma_weights(lam, i)
    return float(np.sum(c * c))


def tewma_var_inf(lam: float, tol: float = 1e-18) -> float:
    _check_lambda(lam)
    if lam == 1.0:
        return 1.0
    n = 64
    while True:
        c = tewma_weights(lam, n)
        if c[-1] ** 2 * n < tol:
            return float(np.sum(c * c))
        n *= 2


def ma_var(w: int, i: float = math.inf) -> float:
    if w < 1:
        raise ValueError("window must be >= 1")
    return 1.0 / min(i, w)


def dma_var_squared_weights(w: int) -> float:
    """Steady (``i >= 2w-1``) DMA variance as the closed sum of squared triangular weights."""
    if w < 1:
        raise ValueError("window must be >= 1")
    return (1.0 + (w - 1) * (2 * w - 1) / (3.0 * w)) / w ** 2


def dma_var_pairwise(w: int) -> float:
    """Steady DMA variance from the covariance-pair expression (double sum over j1 < j2)."""
    if w < 1:
        raise ValueError("window must be >= 1")
    j = np.arange(w, 2 * w)
    j1, j2 = np.meshgrid(j, j, indexing="ij")
    mask = j1 < j2
    s = float(np.sum((j1 - j2 + w)[mask]))
    return (1.0 + 2.0 * s / w ** 2) / w ** 2


def dma_weights(w: int, i: int) -> np.ndarray:
    """Coefficients of ``X_1..X_i`` in the DMA statistic ``D_i``."""
    if w < 1 or i < 1:
        raise ValueError("w and i must be >= 1")
    m = np.zeros((i, i))
    for j in range(1, i + 1):
        lo = max(1, j - w + 1)
        m[j - 1, lo - 1:j] = 1.0 / min(j, w)
    lo = max(1, i - w + 1)
    return m[lo - 1:i].sum(axis=0) / min(i, w)


def dma_var(w: int, i: float = math.inf) -> float:
    """Variance of ``D_i``: closed form once ``i >= 2w-1``, weight expansion before."""
    if w < 1:
        raise ValueError("window must be >= 1")
    if i >= 2 * w - 1:
        return dma_var_squared_weights(w)
    c = dma_weights(w, int(i))
    return float(np.sum(c * c))


def harmonic(t: int) -> float:
    if t < 1:
        raise ValueError("t must be >= 1")
    return math.fsum(1.0 / k for k in range(1, t + 1))


def harmonic_approx(t: float) -> float:
    if t < 1:
        raise ValueError("t must be >= 1")
    return math.log(t) + EULER_GAMMA + 1.0 / (2 * t) - 1.0 / (12 * t * t)


def dpm_var(t: int) -> float:
    return (2 * t - harmonic(t)) / t ** 2


def dpm_sd(t: int) -> float:
    return math.sqrt(dpm_var(t))


def dpm_weights(t: int) -> np.ndarray:
    """Coefficients of ``X_1..X_t`` in the double progressive mean ``D_t``."""
    if t < 1:
        raise ValueError("t must be >= 1")
    inv = 1.0 / np.arange(1, t + 1)
    tail = np.cumsum(inv[::-1])[::-1]
    return tail / t


# ---------------------------------------------------------------------------
# deterministic ARL backends
# ---------------------------------------------------------------------------

def shewhart_arl(c: float, delta: float = 0.0) -> float:
    """Zero-state ARL of the two-sided Shewhart chart with limits ``+-c``."""
    if c <= 0:
        raise ValueError("c must be positive")
    p = ndtr(-c - delta) + ndtr(-c + delta)
    return math.inf if p == 0.0 else 1.0 / p


def _one_sided_cusum_arl(k: float, h: float, delta: float, n: int) -> float:
    w = 2.0 * h / (2 * n - 1)
    centers = np.arange(n) * w
    upper = (np.arange(n) + 0.5) * w
    # P(C' <= upper_j | C = centers_i), C' = max(0, C + X - k)
    cdf = ndtr(upper[None, :] - centers[:, None] + k - delta)
    p = np.diff(np.concatenate([np.zeros((n, 1)), cdf], axis=1), axis=1)
    a = np.eye(n) - p
    try:
        arl = linalg.solve(a, np.ones(n))
    except linalg.LinAlgError as exc:
        raise NumericArlError(f"singular Markov system: {exc}") from exc
    if not np.all(np.isfinite(arl)):
        raise NumericArlError("Markov system produced non-finite ARL")
    return float(arl[0])


def cusum_arl_markov(k: float, h: float, delta: float = 0.0, grid_size: int = 400,
                     two_sided: bool = True) -> NumericArlResult:
    """Zero-state CUSUM ARL by the Brook-Evans chain.

    The two-sided value combines the one-sided chains as
    ``1/ARL = 1/ARL+ + 1/ARL-`` and is flagged approximate.
    """
    if k < 0 or h <= 0:
        raise ValueError("need k >= 0 and h > 0")
    if grid_size < 50:
        raise ValueError("grid_size must be >= 50")
    up = _one_sided_cusum_arl(k, h, delta, grid_size)
    if not two_sided:
        return NumericArlResult(up, ArlMethod.MARKOV_CHAIN, grid_size=grid_size)
    down = _one_sided_cusum_arl(k, h, -delta, grid_size)
    value = 1.0 / (1.0 / up + 1.0 / down)
    return NumericArlResult(value, ArlMethod.MARKOV_CHAIN, grid_size=grid_size, approximate=True)


def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _ewma_kernel(z: np.ndarray, y: np.ndarray, wy: np.ndarray, lam: float, delta: float) -> np.ndarray:
    """Nystroem matrix mapping densities at ``y`` to densities at ``z``."""
    u = (z[:, None] - (1.0 - lam) * y[None, :]) / lam - delta
    return np.exp(-0.5 * u * u) / (math.sqrt(2 * math.pi) * lam) * wy[None, :]


class _EwmaSurvival:
    """Sub-density of ``Z_n`` on the surviving paths, tracked at Gauss-Legendre nodes."""

    def __init__(self, lam: float, c: float, time_varying: bool, nodes: int):
        _check_lambda(lam)
        if c <= 0:
            raise ValueError("c must be positive")
        self.lam, self.c, self.tv = lam, c, time_varying
        self.x, self.w = _gl(nodes)
        self.sd_inf = ewma_sd(lam)

    def half_width(self, n: int) -> float:
        return self.c * (ewma_sd(self.lam, n) if self.tv else self.sd_inf)

    def nodes(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        h = self.half_width(n)
        return h * self.x, h * self.w

    def converged(self, n: int) -> bool:
        return (not self.tv) or self.half_width(n + 1) == self.half_width(n)

    def first(self, delta: float, x1: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        z, wz = self.nodes(1)
        u = z / self.lam - delta
        f = np.exp(-0.5 * u * u) / (math.sqrt(2 * math.pi) * self.lam)
        return f, z, wz

    def step(self, f, y, wy, n, delta):
        z, wz = self.nodes(n + 1)
        return _ewma_kernel(z, y, wy, self.lam, delta) @ f, z, wz

    def tail(self, f, y, wy, delta) -> float:
        """Sum of survival masses from the current step on, once limits are constant."""
        a = _ewma_kernel(y, y, wy, self.lam, delta)
        try:
            g = linalg.solve(np.eye(len(y)) - a, f)
        except linalg.LinAlgError as exc:
            raise NumericArlError(f"singular Nystroem system: {exc}") from exc
        return float(wy @ g)


def ewma_arl_numeric(lam: float, c: float, delta: float = 0.0, policy: str = "TimeVarying",
                     nodes: int = 200, max_horizon: int = 200_000, tol: float = 1e-12) -> NumericArlResult:
    """Zero-state ARL of the two-sided EWMA chart with limits ``+-c * sd``.

    ``policy`` is ``"TimeVarying"`` (exact sd of ``Z_i``) or ``"Asymptotic"``.
    ARL is the sum of survival probabilities ``P(L > n)``; once the limits stop
    moving the remaining sum is obtained from a single linear solve.
    """
    tv = _policy_is_tv(policy)
    surv = _EwmaSurvival(lam, c, tv, nodes)
    f, y, wy = surv.first(delta)
    total, n = 1.0, 1
    while True:
        if surv.converged(n):
            total += surv.tail(f, y, wy, delta)
            return NumericArlResult(total, ArlMethod.FINITE_HORIZON, grid_size=nodes, horizon=n)
        mass = float(wy @ f)
        total += mass
        if mass < tol:
            return NumericArlResult(total, ArlMethod.FINITE_HORIZON, grid_size=nodes, horizon=n,
                                    est_truncation_error=mass)
        if n >= max_horizon:
            raise NumericArlError(f"horizon {max_horizon} exhausted with survival mass {mass:.3g}")
        f, y, wy = surv.step(f, y, wy, n, delta)
        n += 1


def ewma_ced_numeric(lam: float, c: float, delta: float, tau: int, policy: str = "TimeVarying",
                     nodes: int = 200) -> NumericArlResult:
    """Conditional expected delay ``E(L - tau + 1 | L >= tau)`` of the EWMA chart."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if tau == 1:
        return ewma_arl_numeric(lam, c, delta, policy, nodes)
    tv = _policy_is_tv(policy)
    surv = _EwmaSurvival(lam, c, tv, nodes)
    f, y, wy = surv.first(0.0)
    n = 1
    while n < tau - 1:
        f, y, wy = surv.step(f, y, wy, n, 0.0)
        n += 1
    alive = float(wy @ f)
    if alive <= 0.0:
        raise NumericArlError("no survival mass before the change point")
    f = f / alive
    # f is now the conditional density of Z_{tau-1}; shifted observations follow
    total = 1.0
    while True:
        f, y, wy = surv.step(f, y, wy, n, delta)
        n += 1
        if surv.converged(n):
            total += surv.tail(f, y, wy, delta)
            return NumericArlResult(total, ArlMethod.FINITE_HORIZON, grid_size=nodes, horizon=n)
        mass = float(wy @ f)
        total += mass
        if mass < 1e-12:
            return NumericArlResult(total, ArlMethod.FINITE_HORIZON, grid_size=nodes, horizon=n,
                                    est_truncation_error=mass)


def _policy_is_tv(policy) -> bool:
    name = getattr(policy, "value", policy)
    if name not in ("TimeVarying", "Asymptotic"):
        raise ValueError(f"unknown limit policy {policy!r}")
    return name == "TimeVarying"
