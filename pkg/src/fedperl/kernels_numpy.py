"""Vectorised numpy MLP kernels (reference / fallback path).

Parameters are one flat float64 vector. For layer ``i`` with widths
``arch[i] -> arch[i+1]`` the weight matrix (``arch[i+1] x arch[i]``, row-major)
comes first, then the bias. Hidden layers use tanh; the last layer is affine
and feeds a softmax.
"""

from __future__ import annotations

import numpy as np

CROSS_ENTROPY = 0
MSE_TO_TARGET = 1


def _unpack(flat, arch):
    out = []
    off = 0
    for i in range(len(arch) - 1):
        n_in, n_out = int(arch[i]), int(arch[i + 1])
        w = flat[off : off + n_in * n_out].reshape(n_out, n_in)
        off += n_in * n_out
        b = flat[off : off + n_out]
        off += n_out
        out.append((w, b))
    return out


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def logits(flat, arch, x):
    layers = _unpack(flat, arch)
    a = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        a = np.tanh(z) if i < last else z
    return a


def probs(flat, arch, x):
    return softmax(logits(flat, arch, x))


def loss_grad(flat, arch, x, target, weight, kind):
    """Weighted-mean loss and its gradient w.r.t. ``flat``.

    ``kind`` 0: cross-entropy against (soft) targets, 1: squared error between
    softmax output and targets, summed over classes. A zero total weight gives
    a zero loss and zero gradient.
    """
    grad = np.zeros_like(flat)
    total = weight.sum()
    if total <= 0.0:
        return 0.0, grad
    layers = _unpack(flat, arch)
    last = len(layers) - 1
    acts = [x]
    a = x
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        a = np.tanh(z) if i < last else z
        acts.append(a)
    z = acts[-1]
    zs = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=1, keepdims=True))
    logp = zs - lse
    p = np.exp(logp)
    wn = (weight / total)[:, None]
    if kind == CROSS_ENTROPY:
        per = -(target * logp).sum(axis=1)
        delta = p * target.sum(axis=1, keepdims=True) - target
    else:
        diff = p - target
        per = (diff * diff).sum(axis=1)
        g = 2.0 * diff
        delta = p * (g - (g * p).sum(axis=1, keepdims=True))
    loss = float((per * wn[:, 0]).sum())
    delta = delta * wn

    # gradient blocks are laid out like the parameters
    offsets = []
    off = 0
    for w, b in layers:
        offsets.append(off)
        off += w.size + b.size
    for i in range(last, -1, -1):
        w, b = layers[i]
        a_prev = acts[i]
        o = offsets[i]
        grad[o : o + w.size] = (delta.T @ a_prev).ravel()
        grad[o + w.size : o + w.size + b.size] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ w) * (1.0 - a_prev * a_prev)
    return loss, grad
