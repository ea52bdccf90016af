"""Command-line interface: bank analysis, synthetic bank generation, and
benchmark runs.

Exit codes: 0 success, 2 invalid arguments or configuration, 3 unusable data
(bank validation or protocol-infeasible bank), 4 excessive episode failures
(more than 10% failed). Verbosity via the PM_LOG environment variable
(debug, info, warning, error).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .analyzer import PSEUDO_SUBSTITUTE_DEFAULT, analyze_bank, write_matrix_csv, write_report
from .bank import BankError, generate_synthetic_bank, load_bank, save_bank
from .episodes import EpisodeError, write_results
from .trainer import TrainConfig, TrainerError, load_config, run_benchmark

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_FAILURES = 4

FAILURE_BUDGET = 0.10

log = logging.getLogger("margintune")


def _configure_logging() -> None:
    level_name = os.environ.get("PM_LOG", "warning").strip().lower()
    level = {"debug": logging.DEBUG, "info": logging.INFO,
             "warning": logging.WARNING, "error": logging.ERROR}.get(
                 level_name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="margintune",
        description="Inter-class distance analysis and episodic prompt "
                    "adaptation over frozen embedding banks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_an = sub.add_parser("analyze", help="compute m_T, m_V, and the "
                                          "distribution difference of a bank")
    p_an.add_argument("--bank", required=True, help="bank directory")
    p_an.add_argument("--out", required=True, help="report JSON path; CSV "
                      "matrices land next to it as <stem>.text.csv and "
                      "<stem>.image.csv")
    p_an.add_argument("--pseudo-value", type=float,
                      default=PSEUDO_SUBSTITUTE_DEFAULT,
                      help="m_T substitute when all class names are pseudo")
    p_an.add_argument("--figures", action="store_true",
                      help="also render distance heatmaps as <stem>.heatmaps.png")

    p_run = sub.add_parser("run", help="run the episodic benchmark")
    p_run.add_argument("--bank", required=True, help="bank directory")
    p_run.add_argument("--config", help="key=value config file")
    p_run.add_argument("--out", default="results.json", help="results JSON path")
    p_run.add_argument("--way", type=int)
    p_run.add_argument("--shot", type=int)
    p_run.add_argument("--query", type=int)
    p_run.add_argument("--episodes", type=int)
    p_run.add_argument("--seed", type=int, help="master seed override")
    p_run.add_argument("--alpha", type=float)
    p_run.add_argument("--beta", type=float)
    p_run.add_argument("--epochs", type=int)
    p_run.add_argument("--lr", type=float)
    p_run.add_argument("--momentum", type=float)
    p_run.add_argument("--select", type=int,
                       help="augmentation selection count for the active "
                            "shot setting (per class for 1-shot, per support "
                            "image otherwise)")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--matrix-dir",
                       help="write per-episode pre/post distance-matrix CSVs here")
    p_run.add_argument("--state-dir",
                       help="write per-episode prompt-state checkpoints here")
    p_run.add_argument("--figures", action="store_true",
                       help="also render <stem>.loss.png and <stem>.accuracy.png")

    p_sy = sub.add_parser("synth", help="generate a synthetic bank")
    p_sy.add_argument("--out", required=True, help="output bank directory")
    p_sy.add_argument("--classes", type=int, default=8)
    p_sy.add_argument("--dim", type=int, default=64)
    p_sy.add_argument("--sep", type=float, default=0.6,
                      help="inter-class separation in [0, 2]")
    p_sy.add_argument("--align", type=float, default=0.8,
                      help="text-to-class-mean alignment in [0, 1]")
    p_sy.add_argument("--augs", type=int, default=30,
                      help="augmentations per original image")
    p_sy.add_argument("--originals", type=int, default=20,
                      help="original images per class")
    p_sy.add_argument("--noise", type=float, default=0.15)
    p_sy.add_argument("--seed", type=int, default=0)
    return parser


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        bank = load_bank(args.bank)
    except BankError as exc:
        return _fail(EXIT_DATA, str(exc))
    log.info("analyzing bank with %d classes, %d items",
             len(bank.classes), len(bank.items))
    try:
        report = analyze_bank(bank, pseudo_value=args.pseudo_value)
    except (BankError, ValueError) as exc:
        return _fail(EXIT_DATA, str(exc))
    out = Path(args.out)
    write_report(report, out)
    write_matrix_csv(report.text_distance_matrix,
                     out.parent / f"{out.stem}.text.csv")
    write_matrix_csv(report.image_distance_matrix,
                     out.parent / f"{out.stem}.image.csv")
    if args.figures:
        from .figures import render_distance_heatmaps
        render_distance_heatmaps(report, out.parent / f"{out.stem}.heatmaps.png")
    print(f"m_T {report.m_t:.3f} m_V {report.m_v:.3f} diff {report.diff:.3f}")
    return EXIT_OK


def _build_run_config(args: argparse.Namespace) -> TrainConfig:
    config = load_config(args.config) if args.config else TrainConfig()
    overrides: dict[str, object] = {}
    for arg_name, field_name in [
        ("way", "way"), ("shot", "shot"), ("query", "query"),
        ("episodes", "episodes"), ("seed", "master_seed"),
        ("alpha", "alpha"), ("beta", "beta"), ("epochs", "epochs"),
        ("lr", "learning_rate"), ("momentum", "momentum"),
    ]:
        value = getattr(args, arg_name)
        if value is not None:
            overrides[field_name] = value
    config = replace(config, **overrides)
    if args.select is not None:
        if config.shot == 1:
            config = replace(config, select_one_shot=args.select)
        else:
            config = replace(config, select_per_shot=args.select)
    config.validate()
    return config


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = _build_run_config(args)
    except (TrainerError, OSError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    if args.workers < 1:
        return _fail(EXIT_USAGE, f"workers must be >= 1, got {args.workers}")
    try:
        bank = load_bank(args.bank)
    except BankError as exc:
        return _fail(EXIT_DATA, str(exc))
    log.info("running %d episodes (%d-way %d-shot, %d query) with %d worker(s)",
             config.episodes, config.way, config.shot, config.query, args.workers)
    try:
        result = run_benchmark(bank, config, workers=args.workers,
                               matrix_dir=args.matrix_dir,
                               state_dir=args.state_dir)
    except EpisodeError as exc:
        return _fail(EXIT_DATA, str(exc))
    except TrainerError as exc:
        return _fail(EXIT_FAILURES, str(exc))
    out = Path(args.out)
    write_results(result, out)
    if args.figures:
        from .figures import render_accuracy_histogram, render_loss_traces
        render_loss_traces(result, out.parent / f"{out.stem}.loss.png")
        render_accuracy_histogram(result, out.parent / f"{out.stem}.accuracy.png")
    print(f"{result.mean_accuracy:.4f} +/- {result.ci95:.4f} "
          f"({len(result.episode_accuracies)} episodes, "
          f"{result.failed_count} failed)")
    total = len(result.records)
    if total and result.failed_count / total > FAILURE_BUDGET:
        return _fail(EXIT_FAILURES,
                     f"{result.failed_count}/{total} episodes failed "
                     f"(budget {FAILURE_BUDGET:.0%})")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        bank = generate_synthetic_bank(
            classes=args.classes, dim=args.dim, separation=args.sep,
            text_alignment=args.align, augs_per_image=args.augs,
            originals_per_class=args.originals, noise=args.noise,
            seed=args.seed)
    except ValueError as exc:
        return _fail(EXIT_USAGE, str(exc))
    save_bank(bank, args.out)
    print(f"wrote bank: {args.classes} classes, dim {args.dim}, "
          f"{len(bank.items)} items -> {args.out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"analyze": cmd_analyze, "run": cmd_run, "synth": cmd_synth}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
