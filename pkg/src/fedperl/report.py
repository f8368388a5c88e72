"""Experiment reports, their files on disk, and cross-mode comparison tables."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import FEDPERL_MODES, MODES, ExperimentConfig, config_from_dict
from .data import ClientShard, Dataset, dataset_signature
from .errors import ConfigError
from .federation import RoundLog, communication_summary, selection_counts, selection_frequency
from .metrics import evaluate, macro_scores, relative_improvement, summarize
from .nn import ModelParams


@dataclass
class ExperimentReport:
    mode: str
    seed: int
    dataset_signature: str
    n_classes: int
    clients: list[dict]
    class_f1: list[float | None]
    summary: dict[str, dict[str, float]]
    communication: dict | None
    selection_matrix: list[list[float]] | None
    communities: dict | None
    best_round: list[int]
    config: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        return cls(**json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentReport":
        path = Path(path)
        if path.is_dir():
            path = path / "report.json"
        return cls.from_json(path.read_text())


def split_signature(dataset: Dataset, shards: Sequence[ClientShard]) -> str:
    """Signature that ignores which training samples keep their labels, so
    lower, SSL and upper modes on the same data compare as equal."""
    merged = []
    for s in shards:
        train = np.sort(np.concatenate([s.labeled.index, s.unlabeled.index]))
        merged.append(
            ClientShard(
                labeled=type(s.labeled)(s.labeled.X[:0], s.labeled.y[:0], train),
                unlabeled=type(s.unlabeled)(s.unlabeled.X[:0], s.unlabeled.index[:0]),
                validation=s.validation,
                test=s.test,
            )
        )
    return dataset_signature(merged, dataset)


def community_stats(freq: np.ndarray, counts: np.ndarray, community: Sequence[int]) -> dict:
    """Intra-community share of peer picks, and the least-picked clients."""
    tags = np.asarray(community)
    intra = {}
    for c in sorted(set(int(t) for t in tags if t >= 0)):
        members = np.flatnonzero(tags == c)
        rows = [freq[j, members].sum() for j in members if freq[j].sum() > 0]
        intra[str(c)] = float(np.mean(rows)) if rows else 0.0
    picked = counts.sum(axis=0)
    n_out = int((tags < 0).sum())
    order = np.lexsort((np.arange(picked.size), picked))
    return {
        "intra_pct": intra,
        "times_picked": picked.tolist(),
        "least_picked": [int(i) for i in order[: max(n_out, 1)]],
        "outliers": [int(i) for i in np.flatnonzero(tags < 0)],
    }


def build_report(
    cfg: ExperimentConfig,
    dataset: Dataset,
    shards: Sequence[ClientShard],
    community: Sequence[int],
    logs: Sequence[RoundLog],
    eval_params: Sequence[ModelParams],
    best_round: Sequence[int],
) -> ExperimentReport:
    """Assemble a report from round logs and the evaluated parameters only."""
    C = eval_params[0].n_classes
    rows = []
    per_class = []
    for j, (shard, p) in enumerate(zip(shards, eval_params)):
        sc = macro_scores(evaluate(p, shard.test.X, shard.test.y))
        rows.append({"id": j, "f1": sc.f1, "precision": sc.precision, "recall": sc.recall})
        per_class.append(np.where(sc.support > 0, sc.per_class_f1, np.nan))
    pc = np.vstack(per_class)
    class_f1 = [None if np.isnan(pc[:, c]).all() else float(np.nanmean(pc[:, c])) for c in range(C)]
    summary = {k: summarize([r[k] for r in rows]) for k in ("f1", "precision", "recall")}

    comm = sel = comm_stats = None
    M = len(shards)
    if not cfg.is_local:
        comm = communication_summary(logs, cfg.warmup_rounds)
    if cfg.mode in FEDPERL_MODES:
        freq = selection_frequency(logs, M)
        sel = freq.tolist()
        comm_stats = community_stats(freq, selection_counts(logs, M), community)
    return ExperimentReport(
        mode=cfg.mode,
        seed=cfg.seed,
        dataset_signature=split_signature(dataset, shards),
        n_classes=C,
        clients=rows,
        class_f1=class_f1,
        summary=summary,
        communication=comm,
        selection_matrix=sel,
        communities=comm_stats,
        best_round=list(best_round),
        # output location and thread count do not affect results
        config={k: v for k, v in cfg.to_dict().items() if k not in ("out", "threads")},
    )


def report_from_result(result) -> ExperimentReport:
    p = result.prepared
    return build_report(
        result.cfg, p.dataset, p.shards, p.plan.community, result.logs, result.eval_params, result.best_round
    )


# -- files -------------------------------------------------------------------


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([f"{v:.6f}" if isinstance(v, float) else ("" if v is None else v) for v in r])
    return buf.getvalue()


SUMMARY_HEADER = [
    "mode", "f1_mean", "f1_median", "f1_std",
    "precision_mean", "precision_median", "precision_std",
    "recall_mean", "recall_median", "recall_std", "ac_pct",
]


def _summary_row(rep: ExperimentReport) -> list:
    row = [rep.mode]
    for k in ("f1", "precision", "recall"):
        s = rep.summary[k]
        row += [s["mean"], s["median"], s["std"]]
    row.append(rep.communication["additional_cost_pct"] if rep.communication else None)
    return row


def summary_csv(rep: ExperimentReport) -> str:
    return _csv([SUMMARY_HEADER, _summary_row(rep)])


def clients_csv(reps: Sequence[ExperimentReport]) -> str:
    M = len(reps[0].clients)
    rows = [["mode", *range(M), "avg"]]
    for r in reps:
        f1 = [c["f1"] for c in r.clients]
        rows.append([r.mode, *f1, float(np.mean(f1))])
    return _csv(rows)


def classes_csv(reps: Sequence[ExperimentReport]) -> str:
    C = reps[0].n_classes
    rows = [["mode", *(f"c{c}" for c in range(C))]]
    rows += [[r.mode, *r.class_f1] for r in reps]
    return _csv(rows)


def selection_csv(rep: ExperimentReport) -> str:
    M = len(rep.selection_matrix)
    return _csv([["client", *range(M)]] + [[j, *row] for j, row in enumerate(rep.selection_matrix)])


def write_rounds(logs: Sequence[RoundLog], path) -> None:
    with open(path, "w") as fh:
        for rec in logs:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def read_rounds(path) -> list[RoundLog]:
    with open(path) as fh:
        return [RoundLog.from_dict(json.loads(line)) for line in fh if line.strip()]


def save_params(params: Sequence[ModelParams], best_round: Sequence[int], path) -> None:
    np.savez(
        path,
        arch=np.asarray(params[0].arch),
        flats=np.vstack([p.flat for p in params]),
        best_round=np.asarray(best_round),
    )


def load_params(path) -> tuple[list[ModelParams], list[int]]:
    with np.load(path) as z:
        arch = tuple(int(a) for a in z["arch"])
        return [ModelParams(arch, f) for f in z["flats"]], [int(r) for r in z["best_round"]]


def write_outputs(result, out_dir) -> ExperimentReport:
    """Write report.json, the CSV tables, rounds.jsonl and params.npz."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = report_from_result(result)
    (out / "config.json").write_text(json.dumps(result.cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    write_rounds(result.logs, out / "rounds.jsonl")
    save_params(result.eval_params, result.best_round, out / "params.npz")
    write_report_files(rep, out)
    return rep


def write_report_files(rep: ExperimentReport, out: Path) -> None:
    (out / "report.json").write_text(rep.to_json())
    (out / "summary.csv").write_text(summary_csv(rep))
    (out / "clients.csv").write_text(clients_csv([rep]))
    (out / "classes.csv").write_text(classes_csv([rep]))
    if rep.selection_matrix is not None:
        (out / "selection_matrix.csv").write_text(selection_csv(rep))


def rebuild_report(out_dir) -> ExperimentReport:
    """Recompute a report from a run directory's config, rounds and params."""
    from .experiment import prepare_data

    out = Path(out_dir)
    cfg = config_from_dict(json.loads((out / "config.json").read_text()))
    prepared = prepare_data(cfg)
    params, best_round = load_params(out / "params.npz")
    return build_report(
        cfg, prepared.dataset, prepared.shards, prepared.plan.community,
        read_rounds(out / "rounds.jsonl"), params, best_round,
    )


# -- comparison ----------------------------------------------------------------

COMPARE_HEADER = [
    "mode", "f1_mean", "f1_median", "f1_std", "precision_mean", "recall_mean", "ri_pct", "ac_pct", "flag",
]


def compare(reports: Sequence[ExperimentReport], baseline: str = "local_lower") -> list[list]:
    """Comparison rows sorted by the declared mode order.

    RI is measured against ``baseline`` when present, else the first row. A
    negative RI of an upper-bound mode against its lower bound is flagged.
    """
    if len(reports) < 2:
        raise ConfigError("compare needs at least two reports")
    sigs = {r.dataset_signature for r in reports}
    if len(sigs) > 1:
        raise ConfigError(f"reports were produced on different data (signatures {sorted(sigs)})")
    order = {m: i for i, m in enumerate(MODES)}
    reps = sorted(enumerate(reports), key=lambda t: (order.get(t[1].mode, len(order)), t[0]))
    reps = [r for _, r in reps]
    base = next((r for r in reps if r.mode == baseline), reps[0])
    base_f1 = base.summary["f1"]["mean"]
    rows = [COMPARE_HEADER]
    for r in reps:
        f1 = r.summary["f1"]
        ri = relative_improvement(f1["mean"], base_f1)
        flag = ""
        if r.mode.endswith("_upper") and ri < 0:
            flag = "negative_ri"
        ac = r.communication["additional_cost_pct"] if r.communication else None
        rows.append([
            r.mode, f1["mean"], f1["median"], f1["std"],
            r.summary["precision"]["mean"], r.summary["recall"]["mean"], ri, ac, flag,
        ])
    return rows


def comparison_csv(rows: list[list]) -> str:
    return _csv(rows)


def format_table(rows: list[list]) -> str:
    head, body = rows[0], rows[1:]
    lines = [
        f"{'mode':<14} {'F1 mean(median)+-std':<26} {'precision':>9} {'recall':>7} {'RI(%)':>7} {'AC(%)':>6}"
    ]
    for r in body:
        d = dict(zip(head, r))
        ac = "-" if d["ac_pct"] is None else f"{d['ac_pct']:.0f}"
        f1 = f"{d['f1_mean']:.3f}({d['f1_median']:.3f})+-{d['f1_std']:.3f}"
        line = (
            f"{d['mode']:<14} {f1:<26} {d['precision_mean']:>9.3f} {d['recall_mean']:>7.3f}"
            f" {d['ri_pct']:>7.2f} {ac:>6}"
        )
        if d["flag"]:
            line += f"  [{d['flag']}]"
        lines.append(line)
    return "\n".join(lines)
