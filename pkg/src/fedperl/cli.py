"""Command line entry point: ``fedperl run|ladder|compare``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import MODES, ExperimentConfig, parse_config
from .errors import ConfigError, NumericError
from .experiment import prepare_data, run_experiment
from .report import (
    ExperimentReport,
    classes_csv,
    clients_csv,
    compare,
    comparison_csv,
    format_table,
    write_outputs,
)

log = logging.getLogger("fedperl")


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if args.threads is not None:
        changes["threads"] = args.threads
    return cfg.with_(**changes) if changes else cfg


def _out_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out) if cfg.out else Path("results") / cfg.mode


def run(cfg: ExperimentConfig, out_dir=None) -> ExperimentReport:
    out = Path(out_dir) if out_dir is not None else _out_dir(cfg)
    result = run_experiment(cfg)
    rep = write_outputs(result, out)
    log.info("%s: mean F1 %.4f -> %s", cfg.mode, rep.summary["f1"]["mean"], out)
    return rep


def ladder(cfg: ExperimentConfig, out_dir=None) -> list[list]:
    """Run every mode on the same data and write a comparison table."""
    root = Path(out_dir) if out_dir is not None else (Path(cfg.out) if cfg.out else Path("results") / "ladder")
    reports = []
    for mode in MODES:
        mcfg = cfg.with_(mode=mode)
        reports.append(run(mcfg, root / mode))
    rows = compare(reports)
    root.mkdir(parents=True, exist_ok=True)
    (root / "comparison.csv").write_text(comparison_csv(rows))
    (root / "clients.csv").write_text(clients_csv(reports))
    (root / "classes.csv").write_text(classes_csv(reports))
    return rows


def _cmd_run(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    rep = run(cfg)
    print(f"{cfg.mode}: F1 {rep.summary['f1']['mean']:.4f} (median {rep.summary['f1']['median']:.4f}, std {rep.summary['f1']['std']:.4f})")
    return 0


def _cmd_ladder(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    print(format_table(ladder(cfg)))
    return 0


def _cmd_compare(args) -> int:
    reports = [ExperimentReport.load(p) for p in args.reports]
    rows = compare(reports, baseline=args.baseline)
    print(format_table(rows))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(comparison_csv(rows))
    return 0


def _cmd_check(args) -> int:
    cfg = parse_config(args.config)
    prepared = prepare_data(cfg)
    print(f"config ok: mode={cfg.mode} clients={len(prepared.shards)} samples={len(prepared.dataset)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=None, help="parallel client training threads")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fedperl", description="Semi-supervised federated learning with peer learning.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one experiment")
    p.add_argument("config")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("ladder", parents=[common], help="run all modes on one config and compare")
    p.add_argument("config")
    p.set_defaults(func=_cmd_ladder)

    p = sub.add_parser("compare", parents=[common], help="compare finished runs")
    p.add_argument("reports", nargs="+", help="report.json files or run directories")
    p.add_argument("--baseline", default="local_lower")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("check", parents=[common], help="validate a config and build its data split")
    p.add_argument("config")
    p.set_defaults(func=_cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, NumericError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
