"""Command line entry point: ``cucl run | metrics | curve``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ._alloc import tune_malloc
from .datastream import StreamConfig
from .encoder import AugmentationConfig
from .evalkit import AccuracyMatrix, compute_metrics
from .harness import RunConfig, emit_learning_curve, run_experiment
from .losses import LossConfig
from .quantizer import QuantizerConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cucl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train over a task stream and write metrics")
    run.add_argument("--tasks", type=int, default=5)
    run.add_argument("--classes-per-task", type=int, default=5)
    run.add_argument("--train-per-class", type=int, default=200)
    run.add_argument("--test-per-class", type=int, default=50)
    run.add_argument("--input-dim", type=int, default=64)
    run.add_argument("--codebooks", type=int, default=8)
    run.add_argument("--codewords", type=int, default=8)
    run.add_argument("--subdim", type=int, default=16)
    run.add_argument("--tau-q", type=float, default=5.0)
    run.add_argument("--tau-l", type=float, default=0.5)
    run.add_argument("--buffer-size", type=int, default=20)
    run.add_argument("--rehearsal", choices=["furthest", "nearest", "off"], default="furthest")
    run.add_argument("--backbone", choices=["ntxent", "siamese"], default="siamese")
    run.add_argument("--no-cucl", action="store_true")
    run.add_argument("--literal-indicator", action="store_true")
    run.add_argument("--epochs", type=int, default=50)
    run.add_argument("--batch", type=int, default=64)
    run.add_argument("--lr", type=float, default=0.03)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--stream", type=Path, help="stream CSV; default is a generated stream")
    run.add_argument("--out", type=Path, default=Path("runs/latest"))
    run.add_argument("-v", "--verbose", action="store_true")

    met = sub.add_parser("metrics", help="recompute ACC/BWT/MAA from a matrix CSV")
    met.add_argument("matrix", type=Path)

    cur = sub.add_parser("curve", help="write the MAA learning curve of a matrix CSV")
    cur.add_argument("matrix", type=Path)
    cur.add_argument("--out", type=Path, help="output CSV (default: stdout)")
    return parser


def config_from_args(args) -> RunConfig:
    return RunConfig(
        stream=StreamConfig(T=args.tasks, classes_per_task=args.classes_per_task,
                            train_per_class=args.train_per_class,
                            test_per_class=args.test_per_class,
                            input_dim=args.input_dim, seed=args.seed),
        quantizer=QuantizerConfig(M=args.codebooks, K=args.codewords, sub_dim=args.subdim,
                                  tau_q=args.tau_q),
        loss=LossConfig(tau_l=args.tau_l, backbone=args.backbone,
                        literal_indicator=args.literal_indicator),
        augment=AugmentationConfig(),
        buffer_size=args.buffer_size,
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        seed=args.seed,
        cucl_enabled=not args.no_cucl,
        rehearsal_mode=args.rehearsal,
        stream_path=str(args.stream) if args.stream else None,
        out_dir=str(args.out),
    )


def _cmd_run(args) -> int:
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    tune_malloc()
    summary = run_experiment(config_from_args(args))
    print(json.dumps({"metrics": summary.metrics.as_dict(), "out": str(args.out)}))
    return 0


def _cmd_metrics(args) -> int:
    report = compute_metrics(AccuracyMatrix.from_csv(args.matrix))
    print(json.dumps(report.as_dict()))
    return 0


def _cmd_curve(args) -> int:
    matrix = AccuracyMatrix.from_csv(args.matrix)
    if args.out is not None:
        emit_learning_curve(matrix, args.out)
        return 0
    print("after_task,maa_so_far,aa_so_far")
    for j, maa, aa in emit_learning_curve(matrix):
        print(f"{j},{maa:.6f},{aa:.6f}")
    return 0


COMMANDS = {"run": _cmd_run, "metrics": _cmd_metrics, "curve": _cmd_curve}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError, ArithmeticError) as exc:
        print(f"cucl {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
