"""Run one experiment mode end to end."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import FEDPERL_MODES, ExperimentConfig
from .data import ClientShard, Dataset, PartitionPlan, load_csv, make_synthetic, partition
from .errors import ConfigError, NumericError
from .federation import (
    ClientState,
    Federation,
    FederationSettings,
    LocalTask,
    RoundLog,
    client_rng,
    local_train,
)
from .metrics import accuracy, evaluate
from .nn import ModelParams, OptimizerState, init_params

log = logging.getLogger(__name__)


@dataclass
class PreparedData:
    dataset: Dataset
    plan: PartitionPlan
    shards: list[ClientShard]


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    """Build the dataset and client shards for ``cfg``.

    Upper-bound modes re-partition with every training label revealed. The
    random draws are identical, so validation and test sets match the other
    modes exactly.
    """
    dc = cfg.data
    if dc.kind == "csv":
        dataset = load_csv(dc.path)
        known = dataset.y[dataset.y >= 0]
        n_classes = int(known.max()) + 1 if known.size else 0
    else:
        dataset = make_synthetic(dc.classes, dc.dim, dc.n, dc.separation, [cfg.data_seed, 0])
        n_classes = dc.classes
    plan = cfg.partition.build(n_classes, [cfg.data_seed, 2])
    frac = 1.0 if cfg.mode in ("local_upper", "fed_upper") else dc.labeled_fraction
    shards = partition(dataset, plan, [cfg.data_seed, 1], frac, dc.val_fraction, dc.test_fraction)
    return PreparedData(dataset, plan, shards)


def arch_for(cfg: ExperimentConfig, prepared: PreparedData) -> tuple[int, ...]:
    return (prepared.dataset.dim, *cfg.hidden, prepared.plan.n_classes)


def make_task(cfg: ExperimentConfig) -> LocalTask:
    mode = cfg.mode
    return LocalTask(
        steps=cfg.steps_per_round,
        batch_size=cfg.batch_size,
        unlabeled_ratio=cfg.unlabeled_ratio,
        hyper=cfg.ssl.hyper(local=cfg.is_local),
        aug=cfg.augment.params(),
        use_unlabeled=mode in ("local_ssl", "ssfl", *FEDPERL_MODES),
        ensemble_norm=cfg.ensemble_norm,
    )


@dataclass
class ExperimentResult:
    cfg: ExperimentConfig
    prepared: PreparedData
    logs: list[RoundLog]
    eval_params: list[ModelParams]  # model evaluated on each client's test set
    best_round: list[int]  # per client


def _val_accuracy(params: ModelParams, shard: ClientShard) -> float:
    v = shard.validation
    if len(v) == 0:
        return 0.0
    return accuracy(evaluate(params, v.X, v.y))


def _run_local(cfg: ExperimentConfig, prepared: PreparedData, init: ModelParams) -> ExperimentResult:
    task = make_task(cfg)
    M = len(prepared.shards)
    params = [init] * M
    opts = [OptimizerState.zeros_like(init, cfg.lr) for _ in range(M)]
    best_acc = [-1.0] * M
    best = [init] * M
    best_round = [-1] * M
    logs = []

    def work(j, r):
        try:
            return local_train(params[j], opts[j], prepared.shards[j], (), "solo", task, client_rng(cfg.seed, r, j))
        except NumericError as exc:
            raise NumericError(f"client {j}, round {r}: {exc}") from exc

    pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    try:
        for r in range(cfg.rounds):
            if pool is not None:
                outs = list(pool.map(lambda j: work(j, r), range(M)))
            else:
                outs = [work(j, r) for j in range(M)]
            rec = RoundLog(round=r, sampled=list(range(M)))
            seen = acc_n = 0
            accs = []
            for j, (p, o, stats) in enumerate(outs):
                params[j], opts[j] = p, o
                rec.train_loss[j] = stats["loss"]
                seen += stats["n_unlabeled"]
                acc_n += stats["n_accepted"]
                a = _val_accuracy(p, prepared.shards[j])
                accs.append(a)
                if a > best_acc[j]:
                    best_acc[j], best[j], best_round[j] = a, p, r
            rec.acceptance_rate = acc_n / seen if seen else 0.0
            rec.val_accuracy = float(np.mean(accs))
            logs.append(rec)
    finally:
        if pool is not None:
            pool.shutdown()
    return ExperimentResult(cfg, prepared, logs, best, best_round)


def _run_federated(cfg: ExperimentConfig, prepared: PreparedData, init: ModelParams) -> ExperimentResult:
    peer_mode = {"fedperl_nopa": "peers", "fedperl_pa": "pa"}.get(cfg.mode, "none")
    settings = FederationSettings(
        participation_rate=cfg.participation_rate,
        warmup_rounds=cfg.warmup_rounds,
        T=cfg.ssl.T,
        peer_mode=peer_mode,
        peers_from=cfg.peers_from,
        threads=cfg.threads,
    )
    clients = [
        ClientState(j, s, init, OptimizerState.zeros_like(init, cfg.lr), cfg.seed)
        for j, s in enumerate(prepared.shards)
    ]
    fed = Federation(clients, init, make_task(cfg), settings)
    best_acc, best, best_r = -1.0, init, -1
    logs = []
    for r in range(cfg.rounds):
        g, rec = fed.run_round(r, cfg.seed)
        rec.val_accuracy = float(np.mean([_val_accuracy(g, s) for s in prepared.shards]))
        if rec.val_accuracy > best_acc:
            best_acc, best, best_r = rec.val_accuracy, g, r
        logs.append(rec)
    M = len(clients)
    return ExperimentResult(cfg, prepared, logs, [best] * M, [best_r] * M)


def run_experiment(cfg: ExperimentConfig, prepared: PreparedData | None = None) -> ExperimentResult:
    """Train ``cfg.mode`` and keep, per client, the checkpoint with the best
    validation accuracy (the global model's mean validation accuracy in
    federated modes)."""
    if prepared is None:
        prepared = prepare_data(cfg)
    init = init_params(arch_for(cfg, prepared), cfg.seed)
    log.info("mode=%s clients=%d arch=%s", cfg.mode, len(prepared.shards), init.arch)
    if cfg.is_local:
        return _run_local(cfg, prepared, init)
    if cfg.mode not in ("fed_lower", "fed_upper", "ssfl", *FEDPERL_MODES):
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    return _run_federated(cfg, prepared, init)
