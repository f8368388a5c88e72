"""Small tanh MLP with a softmax head, analytic gradients, and Adam.

Models are :class:`ModelParams`: an architecture tuple plus one flat float64
vector. Everything here is pure; updates return new objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._backend import kernels
from .errors import ConfigError, NumericError, ShapeError

LOSS_KINDS = {"cross_entropy": 0, "mse_to_target": 1}


def _n_params(arch: Sequence[int]) -> int:
    return sum(arch[i] * arch[i + 1] + arch[i + 1] for i in range(len(arch) - 1))


def _check_arch(arch) -> tuple[int, ...]:
    try:
        arch = tuple(int(a) for a in arch)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"arch must be a list of integers, got {arch!r}") from exc
    if len(arch) < 2 or any(a <= 0 for a in arch):
        raise ConfigError(f"arch needs >= 2 positive widths, got {list(arch)}")
    return arch


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Parameters of one MLP.

    ``flat`` stores, per layer, the ``(out, in)`` weight matrix row-major followed
    by the bias vector. Treat it as read-only.
    """

    arch: tuple[int, ...]
    flat: np.ndarray
    _arch_arr: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arch = _check_arch(self.arch)
        flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if flat.ndim != 1 or flat.size != _n_params(arch):
            raise ShapeError(
                f"flat vector of size {flat.size} does not match arch {list(arch)}"
                f" ({_n_params(arch)} parameters)"
            )
        object.__setattr__(self, "arch", arch)
        object.__setattr__(self, "flat", flat)
        object.__setattr__(self, "_arch_arr", np.asarray(arch, dtype=np.int64))

    @classmethod
    def from_layers(cls, layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> "ModelParams":
        if not layers:
            raise ConfigError("at least one layer required")
        arch = [np.shape(layers[0][0])[1]]
        parts = []
        for w, b in layers:
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.ndim != 2 or b.shape != (w.shape[0],) or w.shape[1] != arch[-1]:
                raise ShapeError(f"inconsistent layer shapes {w.shape} / {b.shape}")
            arch.append(w.shape[0])
            parts += [w.ravel(), b]
        return cls(tuple(arch), np.concatenate(parts))

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-layer ``(weights, bias)`` views into ``flat``."""
        out = []
        off = 0
        for i in range(len(self.arch) - 1):
            n_in, n_out = self.arch[i], self.arch[i + 1]
            w = self.flat[off : off + n_in * n_out].reshape(n_out, n_in)
            off += n_in * n_out
            out.append((w, self.flat[off : off + n_out]))
            off += n_out
        return out

    def tensors(self) -> list[np.ndarray]:
        """Parameter tensors in layer order: W0, b0, W1, b1, ..."""
        return [t for wb in self.layers for t in wb]

    @property
    def n_params(self) -> int:
        return self.flat.size

    @property
    def n_classes(self) -> int:
        return self.arch[-1]

    def replace(self, flat: np.ndarray) -> "ModelParams":
        return ModelParams(self.arch, flat)

    def same_arch(self, other: "ModelParams") -> bool:
        return self.arch == other.arch

    def equal(self, other: "ModelParams") -> bool:
        """Bit-level equality."""
        return self.arch == other.arch and np.array_equal(self.flat, other.flat)


def check_same_arch(models: Sequence[ModelParams]) -> tuple[int, ...]:
    if not models:
        raise ShapeError("no models given")
    arch = models[0].arch
    for m in models[1:]:
        if m.arch != arch:
            raise ShapeError(f"architecture mismatch: {list(arch)} vs {list(m.arch)}")
    return arch


def anchored_mean(flats: Sequence[np.ndarray], weights: Sequence[float] | None = None) -> np.ndarray:
    """Weighted mean written as ``v0 + sum_j w_j (v_j - v0)``.

    Algebraically the plain weighted mean, but exact when all inputs are
    identical and when there is a single input.
    """
    base = flats[0]
    n = len(flats)
    if weights is None:
        weights = [1.0 / n] * n
    acc = np.zeros_like(base)
    for w, v in zip(weights[1:], flats[1:]):
        acc += w * (v - base)
    return base + acc


def init_params(arch: Sequence[int], seed: int) -> ModelParams:
    """Xavier-uniform weights (variance ``2 / (fan_in + fan_out)``), zero biases."""
    arch = _check_arch(arch)
    rng = np.random.default_rng(seed)
    parts = []
    for n_in, n_out in zip(arch[:-1], arch[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        parts.append(rng.uniform(-limit, limit, size=n_in * n_out))
        parts.append(np.zeros(n_out))
    return ModelParams(arch, np.concatenate(parts))


def _as_batch(params: ModelParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.arch[0]:
        raise ShapeError(f"input of shape {x.shape} does not match input width {params.arch[0]}")
    return np.ascontiguousarray(x)


def logits(params: ModelParams, x) -> np.ndarray:
    """Pre-softmax outputs for a batch ``(n, d)``."""
    return kernels.logits(params.flat, params._arch_arr, _as_batch(params, x))


def forward_batch(params: ModelParams, x) -> np.ndarray:
    """Class probabilities for a batch, shape ``(n, C)``."""
    xb = _as_batch(params, x)
    if xb.shape[0] == 0:
        return np.zeros((0, params.n_classes))
    return kernels.probs(params.flat, params._arch_arr, xb)


def forward(params: ModelParams, x) -> np.ndarray:
    """Class probabilities for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"forward expects a single vector, got shape {x.shape}")
    return forward_batch(params, x)[0]


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = kernels.softmax(np.ascontiguousarray(np.atleast_2d(z)))
    return out[0] if z.ndim == 1 else out


def one_hot(y, n_classes: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    out = np.zeros((y.size, n_classes))
    out[np.arange(y.size), y] = 1.0
    return out


def loss_and_grads(
    params: ModelParams,
    x,
    target,
    weight=None,
    loss_kind: str = "cross_entropy",
) -> tuple[float, ModelParams]:
    """Sample-weighted mean loss and its gradient.

    ``target`` is an ``(n, C)`` matrix (one-hot labels or a probability target).
    With ``loss_kind="mse_to_target"`` the per-sample loss is the squared L2
    distance between the softmax output and the target.
    """
    if loss_kind not in LOSS_KINDS:
        raise ConfigError(f"unknown loss_kind {loss_kind!r}")
    xb = _as_batch(params, x)
    target = np.ascontiguousarray(np.atleast_2d(np.asarray(target, dtype=np.float64)))
    n = xb.shape[0]
    if n == 0:
        raise ShapeError("empty batch")
    if target.shape != (n, params.n_classes):
        raise ShapeError(f"target shape {target.shape} != {(n, params.n_classes)}")
    if weight is None:
        weight = np.ones(n)
    else:
        weight = np.ascontiguousarray(weight, dtype=np.float64)
        if weight.shape != (n,):
            raise ShapeError(f"weight shape {weight.shape} != ({n},)")
    if not (np.isfinite(xb).all() and np.isfinite(target).all() and np.isfinite(weight).all()):
        raise NumericError("non-finite values in loss inputs")
    loss, grad = kernels.loss_grad(
        params.flat, params._arch_arr, xb, target, weight, LOSS_KINDS[loss_kind]
    )
    return float(loss), params.replace(grad)


@dataclass(frozen=True, eq=False)
class OptimizerState:
    """Adam moments, step counter, and hyper-parameters."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ModelParams, lr: float = 5e-5, **kw) -> "OptimizerState":
        return cls(np.zeros(params.n_params), np.zeros(params.n_params), 0, lr, **kw)


def adam_step(
    params: ModelParams, grads: ModelParams, state: OptimizerState
) -> tuple[ModelParams, OptimizerState]:
    if grads.arch != params.arch or state.m.shape != params.flat.shape:
        raise ShapeError("params, grads and optimizer state shapes differ")
    g = grads.flat
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    flat = params.flat - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if not np.isfinite(flat).all():
        raise NumericError(f"non-finite parameters after Adam step {step}")
    new_state = OptimizerState(m, v, step, state.lr, state.beta1, state.beta2, state.eps)
    return params.replace(flat), new_state
