"""Compiled run-length simulators.

Each chart is reduced to a limit-free statistic ``s_i`` plus an optional
runs-rule event that does not depend on the limit; the chart signals at the
first ``i`` with ``s_i > limit`` or an event. That form lets one simulated
path answer the alarm question for a whole grid of limits at once, which the
calibration routine exploits.

Work is split into fixed blocks of ``BLOCK`` replications. Every block writes
its own integer tallies, so the final reduction is exact and independent of
the number of threads.

State vector layout (float64):
  0..2   stacked EWMA levels (Q for MEC)
  3, 4   upper / lower CUSUM accumulators (M for MEC)
  5      running sum of X (MA, PM, DPM)
  6      running sum of M_j (DMA) or P_j (DPM)
  7      harmonic number H_t (DPM)
  8..10  upper runs-rule history (RR-CUSUM flags, RR-EWMA standardized values)
  11..13 lower runs-rule history (RR-CUSUM)
  16..   ring buffers: last w observations, then last w moving means
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from .rng import normal_pair

BLOCK = 1024
STATE_BASE = 16

EWMA, CUSUM, MEC, RRCUSUM, RREWMA, MA, DMA, DEWMA, TEWMA, PM, DPM = range(11)
RR_NONE, RR_2OF2, RR_2OF3, RR_MOD2OF3 = range(4)


@nb.njit(cache=True)
def _median3(a, b, c):
    if a > b:
        a, b = b, a
    if b > c:
        b = c
    return a if a > b else b


@nb.njit(cache=True)
def chart_step(fam, par, sdt, st, i, x):
    """Advance one observation; returns ``(s_i, runs_event)``."""
    last = sdt.shape[0] - 1
    sd = sdt[i] if i <= last else sdt[last]
    lam = par[0]
    event = False
    s = 0.0
    if fam == EWMA:
        z = (1.0 - lam) * st[0] + lam * x
        st[0] = z
        s = abs(z) / sd
    elif fam == DEWMA:
        z1 = (1.0 - lam) * st[0] + lam * x
        z2 = (1.0 - lam) * st[1] + lam * z1
        st[0] = z1
        st[1] = z2
        s = abs(z2) / sd
    elif fam == TEWMA:
        z1 = (1.0 - lam) * st[0] + lam * x
        z2 = (1.0 - lam) * st[1] + lam * z1
        z3 = (1.0 - lam) * st[2] + lam * z2
        st[0] = z1
        st[1] = z2
        st[2] = z3
        s = abs(z3) / sd
    elif fam == MEC:
        q = (1.0 - lam) * st[0] + lam * x
        st[0] = q
        a = par[2] * sd
        mp = st[3] + q - a
        mn = st[4] - q - a
        mp = mp if mp > 0.0 else 0.0
        mn = mn if mn > 0.0 else 0.0
        st[3] = mp
        st[4] = mn
        s = (mp if mp > mn else mn) / sd
    elif fam == CUSUM or fam == RRCUSUM:
        k = par[1]
        cp = st[3] + x - k
        cn = st[4] - x - k
        cp = cp if cp > 0.0 else 0.0
        cn = cn if cn > 0.0 else 0.0
        st[3] = cp
        st[4] = cn
        s = cp if cp > cn else cn
        if fam == RRCUSUM:
            wl = par[5]
            st[8] = st[9]
            st[9] = st[10]
            st[10] = 1.0 if cp > wl else 0.0
            st[11] = st[12]
            st[12] = st[13]
            st[13] = 1.0 if cn > wl else 0.0
            if par[6] == RR_2OF2:
                up = st[9] + st[10]
                dn = st[12] + st[13]
            else:
                up = st[8] + st[9] + st[10]
                dn = st[11] + st[12] + st[13]
            event = up >= 2.0 or dn >= 2.0
    elif fam == RREWMA:
        z = (1.0 - lam) * st[0] + lam * x
        st[0] = z
        st[8] = st[9]
        st[9] = st[10]
        st[10] = z / sd
        a = st[8]
        b = st[9]
        c = st[10]
        rr = par[6]
        if rr == RR_2OF2:
            lo = b if b < c else c
            hi = b if b > c else c
            s = lo if lo > -hi else -hi
        else:
            med = _median3(a, b, c)
            if rr == RR_2OF3:
                s = abs(med)
            else:
                mn = min(a, min(b, c))
                mx = max(a, max(b, c))
                s = -np.inf
                if mn >= 0.0:
                    s = med
                if mx <= 0.0 and -med > s:
                    s = -med
    elif fam == MA or fam == DMA:
        w = int(par[3])
        idx = (i - 1) % w
        if i > w:
            st[5] -= st[STATE_BASE + idx]
        st[STATE_BASE + idx] = x
        st[5] += x
        m = st[5] / (i if i < w else w)
        if fam == MA:
            s = abs(m) / sd
        else:
            if i > w:
                st[6] -= st[STATE_BASE + w + idx]
            st[STATE_BASE + w + idx] = m
            st[6] += m
            s = abs(st[6] / (i if i < w else w)) / sd
    elif fam == PM:
        st[5] += x
        s = abs(st[5]) * float(i) ** (par[4] - 0.5)
    elif fam == DPM:
        st[5] += x
        st[6] += st[5] / i
        st[7] += 1.0 / i
        s = abs(st[6]) * float(i) ** par[4] / math.sqrt(2.0 * i - st[7])
    return s, event


@nb.njit(cache=True)
def run_from(fam, par, sdt, limit, seed, rep, i0, tau, delta, x1, has_x1, cap, st):
    """Continue a path from step ``i0``; returns the alarm time or 0 when capped."""
    blk = -1
    g0 = 0.0
    g1 = 0.0
    for i in range(i0, cap + 1):
        b = (i - 1) >> 1
        if b != blk:
            g0, g1 = normal_pair(seed, rep, b)
            blk = b
        e = g0 if ((i - 1) & 1) == 0 else g1
        if has_x1 and i == 1:
            x = x1
        else:
            x = e + delta if i >= tau else e
        s, ev = chart_step(fam, par, sdt, st, i, x)
        if ev or s > limit:
            return i
    return 0


@nb.njit(cache=True, parallel=True)
def run_lengths(fam, par, sdt, limit, seed, rep0, n, tau, delta, x1, has_x1, cap, nstate):
    """Run length (from time 1) of replications ``rep0 .. rep0+n-1``; 0 marks a capped run."""
    out = np.empty(n, np.int64)
    nblocks = (n + BLOCK - 1) // BLOCK
    for blk in nb.prange(nblocks):
        st = np.zeros(nstate)
        for r in range(blk * BLOCK, min(n, (blk + 1) * BLOCK)):
            st[:] = 0.0
            out[r] = run_from(fam, par, sdt, limit, seed, rep0 + r, 1, tau, delta,
                              x1, has_x1, cap, st)
    return out


@nb.njit(cache=True, parallel=True)
def forked_delays(fam, par, sdt, limit, seed, rep0, n, taus, deltas, x1, has_x1, cap, nstate):
    """Delays ``L - tau + 1`` for every (tau, delta) pair with common random numbers.

    Each replication walks in control; right before step ``tau`` its state is
    copied once per shift and continued with the shifted mean. Replications
    alarming before ``tau`` do not contribute to that ``tau``.
    Returns per-block tallies ``(count, sum, sum_sq, censored)`` of shape
    ``(nblocks, len(taus), len(deltas))``.
    """
    nt = taus.shape[0]
    nd = deltas.shape[0]
    nblocks = (n + BLOCK - 1) // BLOCK
    cnt = np.zeros((nblocks, nt, nd), np.int64)
    sm = np.zeros((nblocks, nt, nd), np.int64)
    sq = np.zeros((nblocks, nt, nd), np.int64)
    cens = np.zeros((nblocks, nt, nd), np.int64)
    for blk in nb.prange(nblocks):
        st = np.zeros(nstate)
        st2 = np.zeros(nstate)
        for r in range(blk * BLOCK, min(n, (blk + 1) * BLOCK)):
            rep = rep0 + r
            st[:] = 0.0
            i = 1
            bcache = -1
            g0 = 0.0
            g1 = 0.0
            alive = True
            for ti in range(nt):
                tau = taus[ti]
                while i < tau:
                    b = (i - 1) >> 1
                    if b != bcache:
                        g0, g1 = normal_pair(seed, rep, b)
                        bcache = b
                    x = g0 if ((i - 1) & 1) == 0 else g1
                    if has_x1 and i == 1:
                        x = x1
                    s, ev = chart_step(fam, par, sdt, st, i, x)
                    if ev or s > limit:
                        alive = False
                        break
                    i += 1
                if not alive:
                    break
                for di in range(nd):
                    st2[:] = st
                    L = run_from(fam, par, sdt, limit, seed, rep, tau, tau, deltas[di],
                                 x1, has_x1, cap, st2)
                    if L == 0:
                        cens[blk, ti, di] += 1
                    else:
                        d = L - tau + 1
                        cnt[blk, ti, di] += 1
                        sm[blk, ti, di] += d
                        sq[blk, ti, di] += d * d
    return cnt, sm, sq, cens


@nb.njit(cache=True, parallel=True)
def grid_run_length_sums(fam, par, sdt, grid, seed, rep0, n, cap, nstate):
    """In-control run-length totals for every limit in the ascending ``grid``.

    One path per replication is followed until it would alarm under the
    largest limit; the run length under each smaller limit is read off on
    the way. A path still running at ``cap`` adds ``cap`` to every limit it
    has not yet passed and is counted in ``censored`` for those limits.
    Returns per-block ``(sums, censored)``, both of shape ``(nblocks, len(grid))``.
    """
    ng = grid.shape[0]
    nblocks = (n + BLOCK - 1) // BLOCK
    sums = np.zeros((nblocks, ng), np.int64)
    cens = np.zeros((nblocks, ng), np.int64)
    for blk in nb.prange(nblocks):
        st = np.zeros(nstate)
        for r in range(blk * BLOCK, min(n, (blk + 1) * BLOCK)):
            rep = rep0 + r
            st[:] = 0.0
            g = 0
            bcache = -1
            g0 = 0.0
            g1 = 0.0
            i = 1
            while g < ng:
                if i > cap:
                    while g < ng:
                        sums[blk, g] += cap
                        cens[blk, g] += 1
                        g += 1
                    break
                b = (i - 1) >> 1
                if b != bcache:
                    g0, g1 = normal_pair(seed, rep, b)
                    bcache = b
                x = g0 if ((i - 1) & 1) == 0 else g1
                s, ev = chart_step(fam, par, sdt, st, i, x)
                if ev:
                    while g < ng:
                        sums[blk, g] += i
                        g += 1
                else:
                    while g < ng and s > grid[g]:
                        sums[blk, g] += i
                        g += 1
                i += 1
    return sums, cens


@nb.njit(cache=True)
def statistic_path(fam, par, sdt, xs, nstate):
    """Limit-free statistic ``s_i`` and runs events along a given observation path."""
    n = xs.shape[0]
    st = np.zeros(nstate)
    s_out = np.empty(n)
    ev_out = np.zeros(n, np.bool_)
    for i in range(1, n + 1):
        s, ev = chart_step(fam, par, sdt, st, i, xs[i - 1])
        s_out[i - 1] = s
        ev_out[i - 1] = ev
    return s_out, ev_out
