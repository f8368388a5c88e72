"""Pseudo-labelling (solo, peer ensemble, anonymized peer) and the local SSL objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import hard_augment, soft_augment
from .errors import ConfigError, ShapeError
from .nn import (
    ModelParams,
    anchored_mean,
    check_same_arch,
    forward_batch,
    loss_and_grads,
    one_hot,
)

MODES = ("solo", "peers", "pa")
ENSEMBLE_NORMS = ("mean", "sum")


@dataclass(frozen=True)
class PseudoLabelDecision:
    accepted: bool
    class_index: int | None
    score: float


@dataclass(frozen=True)
class SslHyper:
    """Confidence threshold ``tau``, unlabeled weight ``beta``, consistency
    weight ``gamma`` and peer count ``T``."""

    tau: float = 0.6
    beta: float = 0.5
    gamma: float = 0.01
    T: int = 2

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if int(self.T) != self.T or self.T < 0:
            raise ConfigError(f"T must be a non-negative integer, got {self.T}")


@dataclass(frozen=True)
class AugmentParams:
    soft_sigma: float = 0.05
    hard_sigma: float = 0.25
    hard_mask: float = 0.2


def ensemble_probs(models: Sequence[ModelParams], x, norm: str = "mean") -> np.ndarray:
    """Combine the members' class probabilities on the same inputs.

    ``mean`` is written as an anchored mean so that identical members reproduce
    the first member's probabilities bit for bit.
    """
    if norm not in ENSEMBLE_NORMS:
        raise ConfigError(f"ensemble_norm must be one of {ENSEMBLE_NORMS}, got {norm!r}")
    check_same_arch(models)
    preds = [forward_batch(m, x) for m in models]
    if len(preds) == 1:
        return preds[0]
    if norm == "sum":
        out = preds[0].copy()
        for p in preds[1:]:
            out += p
        return out
    return anchored_mean(preds)


def threshold(p: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise ``(accepted, class, score)``; argmax ties go to the lowest class."""
    p = np.atleast_2d(p)
    cls = p.argmax(axis=1)
    score = p[np.arange(p.shape[0]), cls]
    return score >= tau, cls, score


def _decision(p: np.ndarray, tau: float) -> PseudoLabelDecision:
    acc, cls, score = threshold(p, tau)
    ok = bool(acc[0])
    return PseudoLabelDecision(ok, int(cls[0]) if ok else None, float(score[0]))


def solo_pseudo_label(frozen: ModelParams, x, tau: float, seed, sigma: float = 0.05) -> PseudoLabelDecision:
    x_soft = soft_augment(x, seed, sigma)
    return _decision(forward_batch(frozen, x_soft), tau)


def peer_pseudo_label(
    frozen_self: ModelParams,
    frozen_peers: Sequence[ModelParams],
    x,
    tau: float,
    seed,
    sigma: float = 0.05,
    norm: str = "mean",
) -> PseudoLabelDecision:
    if not frozen_peers:
        raise ConfigError("peer_pseudo_label needs at least one peer")
    x_soft = soft_augment(x, seed, sigma)
    return _decision(ensemble_probs([frozen_self, *frozen_peers], x_soft, norm), tau)


def anonymize_peers(peers: Sequence[ModelParams]) -> ModelParams:
    """Coordinate-wise mean of the peers' parameters."""
    if not peers:
        raise ConfigError("anonymize_peers needs at least one peer")
    check_same_arch(peers)
    return peers[0].replace(anchored_mean([p.flat for p in peers]))


def pa_pseudo_label(
    frozen_self: ModelParams,
    anonymized: ModelParams,
    x,
    tau: float,
    seed,
    sigma: float = 0.05,
    norm: str = "mean",
) -> PseudoLabelDecision:
    if not frozen_self.same_arch(anonymized):
        raise ShapeError("anonymized peer architecture differs from the client model")
    x_soft = soft_augment(x, seed, sigma)
    return _decision(ensemble_probs([frozen_self, anonymized], x_soft, norm), tau)


@dataclass
class LossInfo:
    supervised: float = 0.0
    unlabeled: float = 0.0
    consistency: float = 0.0
    n_unlabeled: int = 0
    n_accepted: int = 0


def local_ssl_loss(
    params: ModelParams,
    frozen: ModelParams,
    helpers: Sequence[ModelParams],
    x_lab,
    y_lab,
    x_unl,
    hyper: SslHyper,
    mode: str,
    seed,
    aug: AugmentParams = AugmentParams(),
    norm: str = "mean",
) -> tuple[float, ModelParams, LossInfo]:
    """Loss and gradient of the local objective on one mini-batch.

    ``helpers`` are the frozen peer models (``mode="peers"``) or the single
    anonymized peer (``mode="pa"``); ignored for ``"solo"``. Total loss::

        CE(y, f(soft(x_lab)))
        + beta  * mean_{accepted} CE(pseudo, f(hard(x_unl)))
        + gamma * mean_i ||f(x_unl_i) - f_peer(x_unl_i)||^2

    where ``f_peer`` is the anonymized peer (or the mean of the peers'
    probabilities in ``peers`` mode) and the last term is only present when a
    helper exists. Augmentation draws come from ``seed`` in a fixed order and do
    not depend on the mode.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    x_lab = np.asarray(x_lab, dtype=np.float64)
    x_unl = np.asarray(x_unl, dtype=np.float64).reshape(-1, params.arch[0])
    if x_lab.shape[0] == 0:
        raise ConfigError("labeled batch is empty")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    C = params.n_classes
    info = LossInfo(n_unlabeled=x_unl.shape[0])

    x_lab_soft = soft_augment(x_lab, rng, aug.soft_sigma)
    loss, grads = loss_and_grads(params, x_lab_soft, one_hot(y_lab, C))
    info.supervised = loss
    if x_unl.shape[0] == 0:
        return loss, grads, info

    x_unl_soft = soft_augment(x_unl, rng, aug.soft_sigma)
    x_unl_hard = hard_augment(x_unl, rng, aug.hard_sigma, aug.hard_mask)
    helpers = list(helpers) if mode != "solo" else []
    if mode == "pa" and len(helpers) > 1:
        raise ConfigError("pa mode takes exactly one anonymized peer")
    check_same_arch([params, frozen, *helpers])

    accepted, cls, _ = threshold(ensemble_probs([frozen, *helpers], x_unl_soft, norm), hyper.tau)
    info.n_accepted = int(accepted.sum())
    g = grads.flat.copy()
    if hyper.beta > 0 and info.n_accepted:
        lu, gu = loss_and_grads(params, x_unl_hard, one_hot(cls, C), accepted.astype(np.float64))
        info.unlabeled = lu
        loss += hyper.beta * lu
        g += hyper.beta * gu.flat
    if hyper.gamma > 0 and helpers:
        target = ensemble_probs(helpers, x_unl, "mean")
        lc, gc = loss_and_grads(params, x_unl, target, loss_kind="mse_to_target")
        info.consistency = lc
        loss += hyper.gamma * lc
        g += hyper.gamma * gc.flat
    return loss, params.replace(g), info
