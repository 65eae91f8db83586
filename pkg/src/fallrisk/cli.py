"""Command line interface: generate, train, evaluate, ablate, monitor.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .dataset import read_dataset
from .errors import FallRiskError, InvariantViolation
from .features import FeatureSet, Scaling, balance_arrays
from .gbdt import Hyperparams, fit_arrays, load_model, save_model
from .monitor import format_record, run_monitor
from .synthetic import GeneratorConfig, write_generated

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

FEATURE_SET_NAMES = [fs.value for fs in FeatureSet]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _add_hyperparams(p):
    p.add_argument("--lr", type=float, default=0.1, help="learning rate")
    p.add_argument("--trees", type=int, default=100, help="boosting rounds")
    p.add_argument("--leaves", type=int, default=31, help="max leaves per tree")
    p.add_argument("--max-depth", type=int, default=None, help="max tree depth (default: unlimited)")
    p.add_argument("--min-leaf", type=int, default=20, help="min samples per leaf")
    p.add_argument("--lambda-l2", type=float, default=0.0)
    p.add_argument("--noise-sigma", type=float, default=2.0,
                   help="Gaussian noise (px) on oversampled duplicates")


def _hyperparams(args) -> Hyperparams:
    try:
        return Hyperparams(args.lr, args.trees, args.leaves, args.max_depth, args.min_leaf, args.lambda_l2)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fallrisk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic labeled dataset")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--class-mix", type=float, default=0.5, help="fraction of at-risk scenes")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--tau", type=float, default=0.0, help="knee-distance threshold (px) for the label rule")
    g.add_argument("--noise", type=float, default=2.0, help="keypoint noise sigma (px)")
    g.add_argument("--dropout", type=float, default=0.02, help="per-keypoint dropout probability")
    g.add_argument("--contour-jitter", type=float, default=1.0)
    g.add_argument("--label-flip", type=float, default=0.0, help="label noise probability")
    g.add_argument("--out", required=True, help="output path, - for stdout")

    t = sub.add_parser("train", help="train a model on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--feature-set", choices=FEATURE_SET_NAMES, default="kp-knee-head")
    t.add_argument("--seed", type=int, default=42)
    t.add_argument("--out-model", required=True)
    _add_hyperparams(t)

    e = sub.add_parser("evaluate", help="repeated stratified k-fold cross-validation")
    e.add_argument("--data", required=True)
    e.add_argument("--feature-set", choices=FEATURE_SET_NAMES, default="kp-knee-head")
    e.add_argument("--folds", type=int, default=10)
    e.add_argument("--repeats", type=int, default=10)
    e.add_argument("--seed", type=int, default=42)
    e.add_argument("--emit-csv", help="write per-fold rows to this CSV file")
    e.add_argument("--report", help="write the JSON report to this file")
    _add_hyperparams(e)

    a = sub.add_parser("ablate", help="cross-validate all four feature sets")
    a.add_argument("--data", required=True)
    a.add_argument("--seed", type=int, default=42)
    a.add_argument("--folds", type=int, default=10)
    a.add_argument("--repeats", type=int, default=10)
    a.add_argument("--emit-csv")
    a.add_argument("--report")
    _add_hyperparams(a)

    m = sub.add_parser("monitor", help="score a frame stream and emit alerts")
    m.add_argument("--model", required=True)
    m.add_argument("--input", default="-", help="frame records, - for stdin")
    m.add_argument("--output", default="-")
    m.add_argument("--raise", dest="raise_after", type=int, default=3)
    m.add_argument("--clear", dest="clear_after", type=int, default=5)
    m.add_argument("--threshold", type=float, default=0.5)
    m.add_argument("--echo-features", action="store_true")
    return parser


def _open_out(path):
    if path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


def cmd_generate(args):
    cfg = GeneratorConfig(
        n=args.n, class_mix=args.class_mix, seed=args.seed, tau=args.tau,
        keypoint_noise_sigma=args.noise, dropout_prob=args.dropout,
        contour_jitter=args.contour_jitter, label_flip_prob=args.label_flip,
    )
    cfg.validate()
    if args.out == "-":
        from .synthetic import dataset_lines

        for line in dataset_lines(cfg):
            sys.stdout.write(line + "\n")
    else:
        write_generated(args.out, cfg)
    return EXIT_OK


def cmd_train(args):
    hp = _hyperparams(args)
    fs = FeatureSet(args.feature_set)
    ds = read_dataset(args.data)
    X, S = ds.feature_matrix(fs)
    bal = balance_arrays(X, ds.y, np.asarray(ds.source_ids, dtype=object), S, args.noise_sigma, [args.seed, 0])
    scaling = Scaling.fit(bal.X)
    model = fit_arrays(bal.X, bal.y, hp, args.seed, fs, scaling)
    model.meta = {"n_train": int(len(bal.y)), "n_augmented": int(bal.augmented.sum()),
                  "noise_sigma": args.noise_sigma}
    if ds.header is not None:
        model.meta["tau"] = ds.header.get("params", {}).get("tau")
    Path(args.out_model).write_bytes(save_model(model))
    train_acc = float((model.predict(X) == ds.y.astype(bool)).mean())
    print(f"trained {len(model.trees)} trees on {len(bal.y)} samples ({fs.value}); "
          f"training accuracy {train_acc:.4f}")
    return EXIT_OK


def _cv_config(args, fs) -> evaluation.CvConfig:
    try:
        return evaluation.CvConfig(k=args.folds, repeats=args.repeats, seed=args.seed, feature_set=fs,
                                   hyperparams=_hyperparams(args), noise_sigma=args.noise_sigma)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_evaluate(args):
    cfg = _cv_config(args, FeatureSet(args.feature_set))
    ds = read_dataset(args.data)
    report = evaluation.cross_validate(ds, cfg)
    fs = cfg.feature_set
    sys.stdout.write(evaluation.format_table([(fs, report)]))
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    if args.emit_csv:
        evaluation.write_fold_csv(args.emit_csv, [report])
    return EXIT_OK


def cmd_ablate(args):
    cfg = _cv_config(args, FeatureSet.KEYPOINTS_KNEE_HEAD)
    ds = read_dataset(args.data)
    rows = evaluation.ablation_table(ds, cfg)
    sys.stdout.write(evaluation.format_table(rows))
    if args.report:
        Path(args.report).write_text(evaluation.ablation_json(rows), encoding="utf-8")
    if args.emit_csv:
        evaluation.write_fold_csv(args.emit_csv, [rep for _, rep in rows])
    return EXIT_OK


def cmd_monitor(args):
    if args.raise_after < 1 or args.clear_after < 1:
        raise UsageError("--raise and --clear must be >= 1")
    model = load_model(Path(args.model).read_bytes())
    if model.feature_set is None:
        raise FallRiskError("model carries no feature set")
    n_bad = 0

    def diag(msg):
        nonlocal n_bad
        n_bad += 1
        print(msg, file=sys.stderr)

    src = sys.stdin if args.input == "-" else open(args.input, encoding="utf-8")
    out, close = _open_out(args.output)
    try:
        for rec in run_monitor(src, model, args.raise_after, args.clear_after, args.threshold,
                               args.echo_features, diag):
            out.write(format_record(rec) + "\n")
    finally:
        if src is not sys.stdin:
            src.close()
        if close:
            out.close()
    return EXIT_DATA if n_bad else EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "monitor": cmd_monitor,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (FallRiskError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
