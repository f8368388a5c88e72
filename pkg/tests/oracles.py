"""Independent reference computations used as test oracles.

Nothing here calls the package's kernels: the reference MLP is written out
layer by layer, and gradients come from central finite differences.
"""

import numpy as np


def ref_layers(flat, arch):
    out, off = [], 0
    for n_in, n_out in zip(arch[:-1], arch[1:]):
        w = np.asarray(flat[off : off + n_in * n_out]).reshape(n_out, n_in)
        off += n_in * n_out
        out.append((w, np.asarray(flat[off : off + n_out])))
        off += n_out
    return out


def ref_probs(flat, arch, X):
    a = np.atleast_2d(X)
    layers = ref_layers(flat, arch)
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        a = np.tanh(z) if i < len(layers) - 1 else z
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def ref_loss(flat, arch, X, target, weight=None, kind="cross_entropy"):
    p = ref_probs(flat, arch, X)
    w = np.ones(p.shape[0]) if weight is None else np.asarray(weight, dtype=float)
    if w.sum() == 0:
        return 0.0
    if kind == "cross_entropy":
        per = -(target * np.log(p)).sum(axis=1)
    else:
        per = ((p - target) ** 2).sum(axis=1)
    return float((w * per).sum() / w.sum())


def central_diff(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def grad_rel_error(analytic, numeric):
    """Largest coordinate error relative to the gradient's scale."""
    scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def ref_ssl_loss(flat, arch, frozen, helpers, x_lab, y_lab, x_unl, tau, beta, gamma, seed, aug):
    """The local objective rebuilt from the reference MLP.

    Augmented views are replayed in the documented draw order: soft labeled,
    soft unlabeled, hard unlabeled, all from one generator.
    """
    from fedperl.data import hard_augment, soft_augment

    rng = np.random.default_rng(seed)
    C = arch[-1]
    xl = soft_augment(x_lab, rng, aug.soft_sigma)
    loss = ref_loss(flat, arch, xl, np.eye(C)[y_lab])
    xs = soft_augment(x_unl, rng, aug.soft_sigma)
    xh = hard_augment(x_unl, rng, aug.hard_sigma, aug.hard_mask)
    pbar = np.mean([ref_probs(m, arch, xs) for m in [frozen, *helpers]], axis=0)
    acc = pbar.max(axis=1) >= tau
    if beta > 0 and acc.any():
        loss += beta * ref_loss(flat, arch, xh, np.eye(C)[pbar.argmax(axis=1)], acc.astype(float))
    if gamma > 0 and helpers:
        target = np.mean([ref_probs(m, arch, x_unl) for m in helpers], axis=0)
        loss += gamma * ref_loss(flat, arch, x_unl, target, kind="mse_to_target")
    return loss
