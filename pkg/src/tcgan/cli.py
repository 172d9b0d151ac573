"""Command line entry point: train, sweep, eval, metrics, schedule.

Exit codes: 0 success, 1 contract/config error, 2 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from .autodiff import ContractError
from .data import read_points_csv
from .harness.checkpoint import CheckpointFormatError, load_checkpoint
from .harness.config import MODES, TrainingConfig
from .harness.sweep import AXES, rows_to_csv, sweep
from .harness.train import LOG_COLUMNS, NumericalAbort, Trainer, evaluate
from .metrics import FeatureSet, classwise, fid, kid, precision_recall
from .schedule import TransitionSchedule, curve_to_csv, emit_schedule_curve

EXIT_OK, EXIT_CONTRACT, EXIT_NUMERIC = 0, 1, 2


def _load_config(args) -> TrainingConfig:
    cfg = TrainingConfig.load(args.config) if args.config else TrainingConfig()
    return cfg.override(mode=args.mode, t_start=args.ts, t_end=args.te, t_max=args.tm,
                        clip_max=args.clip_max, num_classes=args.classes,
                        samples_per_class=args.per_class, seed=args.seed, output_dir=args.out)


def _write_row(header, row) -> None:
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerow(row)


def cmd_train(args) -> int:
    cfg = _load_config(args)
    tr = Trainer(cfg)
    tr.run()
    final = tr.log.final()
    _write_row(LOG_COLUMNS, [final[c] for c in LOG_COLUMNS])
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    values = [int(v) for v in args.values.split(",") if v]
    seeds = [int(s) for s in args.seeds.split(",") if s]
    rows = sweep(cfg, args.axis, values, seeds, jobs=args.jobs)
    sys.stdout.write(rows_to_csv(rows))
    return EXIT_OK


def cmd_eval(args) -> int:
    record = load_checkpoint(args.checkpoint)
    tr = Trainer.from_checkpoint(record)
    n = args.n_fake or tr.config.fakes_per_class
    rng = np.random.default_rng(args.seed)
    rep = evaluate(tr.gen, args.lam, tr.dataset, n, rng, step=tr.step, with_classwise=True)
    cols = ["step", "lambda", "fid", "kid", "precision", "recall", "mode_coverage", "class_fidelity",
            "classwise_fid_mean", "classwise_kid_mean"]
    vals = {**rep.as_dict(), "lambda": args.lam}
    _write_row(cols, [vals[c] for c in cols])
    return EXIT_OK


def cmd_metrics(args) -> int:
    rp, rl = read_points_csv(args.real)
    fp, fl = read_points_csv(args.fake)
    real, fake = FeatureSet(rp, rl), FeatureSet(fp, fl)
    everything = not (args.fid or args.kid or args.pr or args.classwise)
    header, row = [], []
    if args.fid or everything:
        header.append("fid")
        row.append(fid(real, fake))
    if args.kid or everything:
        header.append("kid")
        row.append(kid(real, fake, args.block_size))
    if args.pr or everything:
        header += ["precision", "recall"]
        row += list(precision_recall(real, fake, args.k))
    if args.classwise or everything:
        _, fm = classwise("fid", real, fake)
        kw = {"block_size": args.block_size} if args.block_size else {}
        _, km = classwise("kid", real, fake, **kw)
        header += ["classwise_fid_mean", "classwise_kid_mean"]
        row += [fm, km]
    _write_row(header, row)
    return EXIT_OK


def cmd_schedule(args) -> int:
    sched = TransitionSchedule(args.ts, args.te, args.tm, args.clip_max)
    sys.stdout.write(curve_to_csv(emit_schedule_curve(sched, args.stride)))
    return EXIT_OK


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON config; flags below override it")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--ts", type=int, help="transition start iteration")
    p.add_argument("--te", type=int, help="transition end iteration")
    p.add_argument("--tm", type=int, help="total training iterations")
    p.add_argument("--clip-max", type=float)
    p.add_argument("--classes", type=int)
    p.add_argument("--per-class", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcgan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training job")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="independent runs over one axis and several seeds")
    _add_run_flags(p)
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--values", required=True, help="comma-separated integers")
    p.add_argument("--seeds", default="0", help="comma-separated integers")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="evaluate a checkpoint's generator")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--n-fake", type=int)
    p.add_argument("--seed", type=int, default=0, help="latent draw seed")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("metrics", help="compare two labeled point CSV files")
    p.add_argument("real")
    p.add_argument("fake")
    p.add_argument("--fid", action="store_true")
    p.add_argument("--kid", action="store_true")
    p.add_argument("--pr", action="store_true")
    p.add_argument("--classwise", action="store_true")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--block-size", type=int)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("schedule", help="emit the t,lambda curve as CSV")
    p.add_argument("--ts", type=int, required=True)
    p.add_argument("--te", type=int, required=True)
    p.add_argument("--tm", type=int, required=True)
    p.add_argument("--stride", type=int, default=100)
    p.add_argument("--clip-max", type=float, default=1.0)
    p.set_defaults(func=cmd_schedule)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalAbort as exc:
        print(f"numerical abort at step {exc.step}: {exc} (checkpoint: {exc.checkpoint})", file=sys.stderr)
        return EXIT_NUMERIC
    except (ContractError, CheckpointFormatError, ValueError, IndexError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
