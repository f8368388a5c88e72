"""Federated rounds: FedAvg, client similarity, peer selection, and accounting.

Only :class:`Downlink` and :class:`Uplink` messages cross the client/server
boundary. Both carry model parameters and scalar bookkeeping, never samples.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .data import ClientShard
from .errors import ConfigError, NumericError, ShapeError
from .nn import ModelParams, OptimizerState, adam_step, anchored_mean, check_same_arch
from .ssl import AugmentParams, SslHyper, anonymize_peers, local_ssl_loss

log = logging.getLogger(__name__)

BYTES_PER_PARAM = 8  # float64 payloads

# stream tags for per-purpose RNG derivation
_SAMPLE_STREAM = 0
_CLIENT_STREAM = 1


def round_rng(seed: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, round_index, _SAMPLE_STREAM])


def client_rng(seed: int, round_index: int, client_id: int) -> np.random.Generator:
    """Independent stream per (experiment, round, client); execution order does not matter."""
    return np.random.default_rng([seed, round_index, _CLIENT_STREAM, client_id])


# -- aggregation and similarity ---------------------------------------------


def fedavg_aggregate(updates: Sequence[tuple[ModelParams, float]]) -> ModelParams:
    """Data-size weighted parameter average ``sum_j N_j phi_j / sum_j N_j``."""
    if not updates:
        raise ConfigError("fedavg_aggregate needs at least one update")
    models = [u[0] for u in updates]
    check_same_arch(models)
    n = np.asarray([u[1] for u in updates], dtype=np.float64)
    if (n < 0).any():
        raise ConfigError("sample counts must be non-negative")
    total = n.sum()
    if total <= 0:
        raise ConfigError("total aggregation weight is zero")
    return models[0].replace(anchored_mean([m.flat for m in models], list(n / total)))


def extract_features(params: ModelParams) -> np.ndarray:
    """Mean and population std of every parameter tensor, in layer order."""
    feats = []
    for t in params.tensors():
        feats += [t.mean(), t.std()]
    return np.asarray(feats, dtype=np.float64)


def similarity_matrix(features: Sequence[np.ndarray]) -> np.ndarray:
    """Pairwise cosine similarity.

    A zero feature vector gets similarity 0 to every other client and 1 to
    itself.
    """
    F = np.asarray(features, dtype=np.float64)
    if F.ndim != 2:
        raise ShapeError("features must be equal-length vectors")
    norms = np.linalg.norm(F, axis=1)
    zero = norms == 0
    if zero.any():
        log.warning("zero-norm feature vector for clients %s", np.flatnonzero(zero).tolist())
    U = np.zeros_like(F)
    U[~zero] = F[~zero] / norms[~zero, None]
    W = U @ U.T
    W = 0.5 * (W + W.T)
    np.clip(W, -1.0, 1.0, out=W)
    np.fill_diagonal(W, 1.0)
    return W


def select_peers(W: np.ndarray, j: int, T: int, eligible) -> list[int]:
    """The ``T`` eligible clients most similar to ``j``; ties go to the lower id."""
    if T < 1:
        return []
    cand = sorted(int(k) for k in eligible if int(k) != j)
    if not cand:
        return []
    row = W[j, cand]
    order = np.lexsort((np.asarray(cand), -row))
    return [cand[i] for i in order[:T]]


# -- client side ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Downlink:
    """Server -> client: the global model plus optional peer knowledge."""

    global_params: ModelParams
    helpers: tuple[ModelParams, ...] = ()
    helper_mode: str = "solo"  # "solo", "peers" or "pa"

    @property
    def payloads(self) -> int:
        return 1 + len(self.helpers)


@dataclass(frozen=True, eq=False)
class Uplink:
    """Client -> server: trained parameters and scalar statistics."""

    client_id: int
    params: ModelParams
    n_samples: int
    loss: float
    n_unlabeled: int
    n_accepted: int

    @property
    def payloads(self) -> int:
        return 1


_ALLOWED = (ModelParams, int, float, str)


def check_boundary(msg) -> None:
    """Reject any message field that is not a model, a model tuple, or a scalar."""
    for f in fields(msg):
        v = getattr(msg, f.name)
        items = v if isinstance(v, tuple) else (v,)
        for item in items:
            if isinstance(item, bool) or not isinstance(item, _ALLOWED):
                raise TypeError(f"{type(msg).__name__}.{f.name} carries {type(item).__name__}")


@dataclass(frozen=True)
class LocalTask:
    """How a client trains locally in one round."""

    steps: int
    batch_size: int
    unlabeled_ratio: int
    hyper: SslHyper
    aug: AugmentParams
    use_unlabeled: bool
    ensemble_norm: str = "mean"


@dataclass
class ClientState:
    id: int
    shard: ClientShard
    params: ModelParams
    opt: OptimizerState
    rng_seed: int


def local_train(
    params: ModelParams,
    opt: OptimizerState,
    shard: ClientShard,
    helpers: Sequence[ModelParams],
    helper_mode: str,
    task: LocalTask,
    rng: np.random.Generator,
) -> tuple[ModelParams, OptimizerState, dict]:
    """``task.steps`` Adam steps on the local objective.

    Pseudo labels come from the parameters at entry (the frozen snapshot).
    """
    lab, unl = shard.labeled, shard.unlabeled
    n_l = len(lab)
    if n_l == 0:
        raise ConfigError("client has no labeled samples")
    n_u = len(unl) if task.use_unlabeled else 0
    b_l = min(task.batch_size, n_l)
    b_u = min(task.batch_size * task.unlabeled_ratio, n_u)
    frozen = params
    losses = []
    seen = accepted = 0
    empty = np.empty((0, lab.X.shape[1]))
    for _ in range(task.steps):
        li = rng.choice(n_l, size=b_l, replace=False)
        xu = unl.X[rng.choice(n_u, size=b_u, replace=False)] if b_u else empty
        loss, grads, info = local_ssl_loss(
            params, frozen, helpers, lab.X[li], lab.y[li], xu,
            task.hyper, helper_mode, rng, task.aug, task.ensemble_norm,
        )
        params, opt = adam_step(params, grads, opt)
        losses.append(loss)
        seen += info.n_unlabeled
        accepted += info.n_accepted
    stats = {"loss": float(np.mean(losses)), "n_unlabeled": seen, "n_accepted": accepted}
    return params, opt, stats


def client_update(
    client: ClientState, down: Downlink, task: LocalTask, round_index: int
) -> Uplink:
    """Run one round of local training on ``client`` (mutates its state)."""
    check_boundary(down)
    rng = client_rng(client.rng_seed, round_index, client.id)
    try:
        params, opt, stats = local_train(
            down.global_params, client.opt, client.shard, down.helpers, down.helper_mode, task, rng
        )
    except NumericError as exc:
        raise NumericError(f"client {client.id}, round {round_index}: {exc}") from exc
    client.params, client.opt = params, opt
    up = Uplink(client.id, params, client.shard.n_train, stats["loss"], stats["n_unlabeled"], stats["n_accepted"])
    check_boundary(up)
    return up


# -- server side ------------------------------------------------------------


@dataclass
class RoundLog:
    round: int
    sampled: list[int]
    peers: dict[int, list[int]] = field(default_factory=dict)
    train_loss: dict[int, float] = field(default_factory=dict)
    acceptance_rate: float = 0.0
    down_payloads: int = 0
    up_payloads: int = 0
    bytes_down: int = 0
    bytes_up: int = 0
    val_accuracy: float | None = None
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "sampled": list(self.sampled),
            "peers": {str(k): list(v) for k, v in sorted(self.peers.items())},
            "train_loss": {str(k): v for k, v in sorted(self.train_loss.items())},
            "acceptance_rate": self.acceptance_rate,
            "down_payloads": self.down_payloads,
            "up_payloads": self.up_payloads,
            "bytes_down": self.bytes_down,
            "bytes_up": self.bytes_up,
            "val_accuracy": self.val_accuracy,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundLog":
        return cls(
            round=d["round"],
            sampled=list(d["sampled"]),
            peers={int(k): list(v) for k, v in d["peers"].items()},
            train_loss={int(k): v for k, v in d["train_loss"].items()},
            acceptance_rate=d["acceptance_rate"],
            down_payloads=d["down_payloads"],
            up_payloads=d["up_payloads"],
            bytes_down=d["bytes_down"],
            bytes_up=d["bytes_up"],
            val_accuracy=d.get("val_accuracy"),
            wall_time=d.get("wall_time", 0.0),
        )


@dataclass(frozen=True)
class FederationSettings:
    participation_rate: float
    warmup_rounds: int
    T: int
    peer_mode: str  # "none", "peers" or "pa"
    peers_from: str = "local"
    threads: int = 1


def n_sampled(rate: float, M: int) -> int:
    # round() guards against 0.3 * 10 == 3.0000000000000004
    return max(1, min(M, math.ceil(round(rate * M, 9))))


class Federation:
    """Server state plus the clients it coordinates."""

    def __init__(self, clients: list[ClientState], init: ModelParams, task: LocalTask, settings: FederationSettings):
        if not clients:
            raise ConfigError("federation needs at least one client")
        self.clients = clients
        self.task = task
        self.settings = settings
        self.global_params = init
        # server-held last-known parameters per client, used for similarity and peers
        self.bank: list[ModelParams] = [init] * len(clients)
        self.similarity = similarity_matrix([extract_features(p) for p in self.bank])

    @property
    def M(self) -> int:
        return len(self.clients)

    def peers_active(self, round_index: int) -> bool:
        s = self.settings
        return s.peer_mode != "none" and s.T > 0 and round_index >= s.warmup_rounds

    def downlink_for(self, j: int, round_index: int) -> tuple[Downlink, list[int]]:
        if not self.peers_active(round_index):
            return Downlink(self.global_params), []
        eligible = [k for k in range(self.M) if k != j]
        peers = select_peers(self.similarity, j, self.settings.T, eligible)
        if not peers:
            return Downlink(self.global_params), []
        models = [self.bank[k] for k in peers]
        if self.settings.peer_mode == "pa":
            # the server builds the anonymized peer; the client never learns who is in it
            return Downlink(self.global_params, (anonymize_peers(models),), "pa"), peers
        return Downlink(self.global_params, tuple(models), "peers"), peers

    def sample_clients(self, seed: int, round_index: int) -> list[int]:
        k = n_sampled(self.settings.participation_rate, self.M)
        picked = round_rng(seed, round_index).choice(self.M, size=k, replace=False)
        return sorted(int(j) for j in picked)

    def run_round(self, round_index: int, seed: int) -> tuple[ModelParams, RoundLog]:
        t0 = time.perf_counter()
        sampled = self.sample_clients(seed, round_index)
        logrec = RoundLog(round=round_index, sampled=sampled)
        downs = {}
        for j in sampled:
            down, peers = self.downlink_for(j, round_index)
            downs[j] = down
            if peers:
                logrec.peers[j] = peers
            logrec.down_payloads += down.payloads

        def work(j):
            return client_update(self.clients[j], downs[j], self.task, round_index)

        if self.settings.threads > 1 and len(sampled) > 1:
            with ThreadPoolExecutor(max_workers=self.settings.threads) as pool:
                ups = list(pool.map(work, sampled))
        else:
            ups = [work(j) for j in sampled]
        ups.sort(key=lambda u: u.client_id)

        self.global_params = fedavg_aggregate([(u.params, u.n_samples) for u in ups])
        for u in ups:
            self.bank[u.client_id] = u.params if self.settings.peers_from == "local" else self.global_params
        for c in self.clients:
            c.params = self.global_params
        self.similarity = similarity_matrix([extract_features(p) for p in self.bank])

        n_par = self.global_params.n_params
        logrec.up_payloads = sum(u.payloads for u in ups)
        logrec.bytes_down = logrec.down_payloads * n_par * BYTES_PER_PARAM
        logrec.bytes_up = logrec.up_payloads * n_par * BYTES_PER_PARAM
        logrec.train_loss = {u.client_id: u.loss for u in ups}
        seen = sum(u.n_unlabeled for u in ups)
        logrec.acceptance_rate = sum(u.n_accepted for u in ups) / seen if seen else 0.0
        logrec.wall_time = time.perf_counter() - t0
        return self.global_params, logrec


# -- accounting -------------------------------------------------------------


def selection_frequency(logs: Sequence[RoundLog], M: int) -> np.ndarray:
    """Row ``j``: percentage of ``j``'s peer picks that went to each client."""
    if not logs:
        raise ConfigError("selection_frequency needs at least one round log")
    counts = np.zeros((M, M))
    for rec in logs:
        for j, peers in rec.peers.items():
            for k in peers:
                counts[j, k] += 1
    tot = counts.sum(axis=1, keepdims=True)
    out = np.zeros_like(counts)
    np.divide(100.0 * counts, tot, out=out, where=tot > 0)
    return out


def selection_counts(logs: Sequence[RoundLog], M: int) -> np.ndarray:
    counts = np.zeros((M, M), dtype=np.int64)
    for rec in logs:
        for j, peers in rec.peers.items():
            for k in peers:
                counts[j, k] += 1
    return counts


def communication_summary(logs: Sequence[RoundLog], warmup_rounds: int = 0) -> dict:
    """Payload totals and the extra download cost relative to plain FedAvg.

    FedAvg sends one model per sampled client, so the baseline is the number of
    sampled-client visits. ``additional_cost_pct`` covers rounds after warm-up.
    """
    down = sum(r.down_payloads for r in logs)
    up = sum(r.up_payloads for r in logs)
    base = sum(len(r.sampled) for r in logs)
    post = [r for r in logs if r.round >= warmup_rounds]
    post_down = sum(r.down_payloads for r in post)
    post_base = sum(len(r.sampled) for r in post)
    return {
        "down_payloads": down,
        "up_payloads": up,
        "fedavg_payloads": base,
        "bytes_down": sum(r.bytes_down for r in logs),
        "bytes_up": sum(r.bytes_up for r in logs),
        "additional_cost_pct": 100.0 * (post_down - post_base) / post_base if post_base else 0.0,
        "additional_cost_all_rounds_pct": 100.0 * (down - base) / base if base else 0.0,
    }
