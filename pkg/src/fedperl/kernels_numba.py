"""Loop-based numba MLP kernels.

Same contracts and parameter layout as :mod:`fedperl.kernels_numpy`; results
agree to rounding. ``arch`` must be an int64 array.

Inner loops index 2-D views with ``range`` counters only: offset arithmetic
like ``flat[row + k]`` makes numba emit wraparound checks that block
vectorisation.
"""

from __future__ import annotations

import numpy as np
from numba import njit

CROSS_ENTROPY = 0
MSE_TO_TARGET = 1

# reassociation only; inf/nan semantics are kept so NaN checks still work
_FASTMATH = {"reassoc", "contract", "nsz", "arcp"}
# error_model="numpy" drops the per-division ZeroDivisionError check, which
# otherwise keeps every loop containing a "/" scalar
_JIT = dict(cache=True, nogil=True, fastmath=_FASTMATH, error_model="numpy")

_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10
_INV_LN2 = 1.44269504088896338700e00
# 1/k! for k = 2..13: Taylor series of expm1 on |r| <= ln(2)/2, error < 1e-17
_C = (
    1.0 / 2, 1.0 / 6, 1.0 / 24, 1.0 / 120, 1.0 / 720, 1.0 / 5040, 1.0 / 40320,
    1.0 / 362880, 1.0 / 3628800, 1.0 / 39916800, 1.0 / 479001600, 1.0 / 6227020800,
)


@njit(**_JIT)
def _tanh_inplace(z):
    """tanh over a C-contiguous array, written so LLVM can vectorise it.

    libm calls cannot be vectorised, so expm1(-2|v|) is evaluated by hand:
    Cody-Waite reduction x = k ln2 + r, a polynomial for expm1(r), and 2**k
    assembled from its exponent bits. Agrees with np.tanh to a few ulp.
    """
    n = z.size
    zf = z.reshape(n)
    kbits = np.empty(n, dtype=np.int64)
    rb = np.empty(n)
    for i in range(n):
        x = max(-2.0 * abs(zf[i]), -45.0)  # tanh(22.5) rounds to 1
        k = np.floor(x * _INV_LN2 + 0.5)
        rb[i] = (x - k * _LN2_HI) - k * _LN2_LO
        kbits[i] = (np.int64(k) + 1023) << 52
    scale = kbits.view(np.float64)
    c0, c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11 = _C
    for i in range(n):
        r = rb[i]
        p = r * (1.0 + r * (c0 + r * (c1 + r * (c2 + r * (c3 + r * (c4 + r * (c5 + r * (
            c6 + r * (c7 + r * (c8 + r * (c9 + r * (c10 + r * c11))))))))))))
        s = scale[i]
        e = s * p + (s - 1.0)  # expm1(x); exact passthrough when k == 0
        t = -e / (2.0 + e)
        zf[i] = t if zf[i] >= 0.0 else -t
    return z


@njit(**_JIT)
def softmax(z):
    n, c = z.shape
    out = np.empty_like(z)
    for s in range(n):
        m = z[s, 0]
        for k in range(1, c):
            if z[s, k] > m:
                m = z[s, k]
        tot = 0.0
        for k in range(c):
            e = np.exp(z[s, k] - m)
            out[s, k] = e
            tot += e
        for k in range(c):
            out[s, k] /= tot
    return out


@njit(**_JIT)
def _dense(a, w, b, squash):
    n, n_in = a.shape
    n_out = w.shape[0]
    z = np.empty((n, n_out))
    for s in range(n):
        a_s = a[s]
        for o in range(n_out):
            w_o = w[o]
            acc = b[o]
            for k in range(n_in):
                acc += w_o[k] * a_s[k]
            z[s, o] = acc
    if squash:
        _tanh_inplace(z)
    return z


@njit(**_JIT)
def logits(flat, arch, x):
    n_layers = arch.shape[0] - 1
    a = np.ascontiguousarray(x)
    off = 0
    for i in range(n_layers):
        n_in = arch[i]
        n_out = arch[i + 1]
        w = flat[off : off + n_in * n_out].reshape((n_out, n_in))
        off += n_in * n_out
        b = flat[off : off + n_out]
        off += n_out
        a = _dense(a, w, b, i < n_layers - 1)
    return a


@njit(**_JIT)
def probs(flat, arch, x):
    return softmax(logits(flat, arch, x))


@njit(**_JIT)
def loss_grad(flat, arch, x, target, weight, kind):
    grad = np.zeros_like(flat)
    total = 0.0
    for s in range(weight.shape[0]):
        total += weight[s]
    if total <= 0.0:
        return 0.0, grad

    n_layers = arch.shape[0] - 1
    offs = np.empty(n_layers, dtype=np.int64)
    acts = [np.ascontiguousarray(x)]
    off = 0
    for i in range(n_layers):
        n_in = arch[i]
        n_out = arch[i + 1]
        offs[i] = off
        w = flat[off : off + n_in * n_out].reshape((n_out, n_in))
        b = flat[off + n_in * n_out : off + n_in * n_out + n_out]
        off += n_in * n_out + n_out
        acts.append(_dense(acts[i], w, b, i < n_layers - 1))

    z = acts[n_layers]
    n, c = z.shape
    delta = np.empty((n, c))
    loss = 0.0
    for s in range(n):
        ws = weight[s] / total
        m = z[s, 0]
        for k in range(1, c):
            if z[s, k] > m:
                m = z[s, k]
        se = 0.0
        for k in range(c):
            se += np.exp(z[s, k] - m)
        lse = np.log(se)
        per = 0.0
        if kind == CROSS_ENTROPY:
            tsum = 0.0
            for k in range(c):
                t = target[s, k]
                tsum += t
                per -= t * (z[s, k] - m - lse)
            for k in range(c):
                delta[s, k] = ws * (np.exp(z[s, k] - m - lse) * tsum - target[s, k])
        else:
            gp = 0.0
            for k in range(c):
                p = np.exp(z[s, k] - m - lse)
                d = p - target[s, k]
                per += d * d
                gp += 2.0 * d * p
            for k in range(c):
                p = np.exp(z[s, k] - m - lse)
                delta[s, k] = ws * p * (2.0 * (p - target[s, k]) - gp)
        loss += ws * per

    for i in range(n_layers - 1, -1, -1):
        n_in = arch[i]
        n_out = arch[i + 1]
        o = offs[i]
        w = flat[o : o + n_in * n_out].reshape((n_out, n_in))
        gw = grad[o : o + n_in * n_out].reshape((n_out, n_in))
        gb = grad[o + n_in * n_out : o + n_in * n_out + n_out]
        a_prev = acts[i]
        for s in range(n):
            a_s = a_prev[s]
            d_s = delta[s]
            for r in range(n_out):
                d = d_s[r]
                gw_r = gw[r]
                for k in range(n_in):
                    gw_r[k] += d * a_s[k]
                gb[r] += d
        if i > 0:
            nd = np.zeros((n, n_in))
            for s in range(n):
                d_s = delta[s]
                nd_s = nd[s]
                for r in range(n_out):
                    d = d_s[r]
                    w_r = w[r]
                    for k in range(n_in):
                        nd_s[k] += d * w_r[k]
                a_s = a_prev[s]
                for k in range(n_in):
                    nd_s[k] *= 1.0 - a_s[k] * a_s[k]
            delta = nd
    return loss, grad
