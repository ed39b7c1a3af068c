"""Counter-based normal variates.

Every observation used by the simulators is a pure function of
``(master_seed, replication, time index)``: a Philox4x32-10 block is keyed by
the 64-bit seed and addressed by the replication and the pair index
``(t - 1) // 2``. Each block yields two 53-bit uniforms that are mapped to
standard normals by inverse-CDF (Wichura's AS241). Nothing depends on how
replications are scheduled across threads.
"""

from __future__ import annotations

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0


@nb.njit(cache=True, inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x32 on uint64-held 32-bit words."""
    for r in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _S32
        lo0 = p0 & _MASK
        hi1 = p1 >> _S32
        lo1 = p1 & _MASK
        c0 = (hi1 ^ c1 ^ k0) & _MASK
        c1 = lo1
        c2 = (hi0 ^ c3 ^ k1) & _MASK
        c3 = lo0
        if r < 9:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


@nb.njit(cache=True)
def ndtri(p):
    """Standard normal quantile, AS241 (PPND16); relative accuracy ~1e-16."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = np.sqrt(-np.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@nb.njit(cache=True, inline="always")
def normal_pair(seed, rep, block):
    """Two standard normals for pair index ``block`` of replication ``rep``."""
    s = np.uint64(seed)
    r = np.uint64(rep)
    b = np.uint64(block)
    w0, w1, w2, w3 = philox4x32(b & _MASK, b >> _S32, r & _MASK, r >> _S32,
                                s & _MASK, s >> _S32)
    u0 = (float(((w0 << _S32) | w1) >> _S11) + 0.5) * _TWO_M53
    u1 = (float(((w2 << _S32) | w3) >> _S11) + 0.5) * _TWO_M53
    return ndtri(u0), ndtri(u1)


@nb.njit(cache=True)
def normals(seed, rep, n):
    """First ``n`` noise terms of replication ``rep`` (time indices 1..n)."""
    out = np.empty(n)
    for b in range((n + 1) // 2):
        g0, g1 = normal_pair(seed, rep, b)
        out[2 * b] = g0
        if 2 * b + 1 < n:
            out[2 * b + 1] = g1
    return out


def philox_block(counter, key):
    """Raw Philox4x32-10 output for a 4-word counter and 2-word key."""
    c = [np.uint64(v) for v in counter]
    k = [np.uint64(v) for v in key]
    return tuple(int(v) for v in philox4x32(c[0], c[1], c[2], c[3], k[0], k[1]))
