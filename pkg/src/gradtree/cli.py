"""Command-line frontend: train, predict, evaluate, benchmark, explain, synth.

Flag values win over an optional TOML config file, which wins over built-in
defaults. All randomness flows from the single --seed flag, so every command
is a pure function of its input files and flags (timing columns aside).
"""

import argparse
import csv
import json
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .data import DataError, Task, load_csv
from .evaluate import EvalError, benchmark, generate_v_dataset, kfold_evaluate
from .tree import (
    Criterion,
    ModelFormatError,
    TrainConfig,
    build_tree,
    explain,
    load_model,
    render_explanation,
    save_model,
)
from .weak import GdConfig, NormKind, TrainingError

CRITERIA = {
    "mt-dt": Criterion.IMPURITY,
    "mt-g": Criterion.GRADIENT,
    "mt-gr": Criterion.GRADIENT_RENORM,
}
TASKS = {"clf": Task.CLASSIFICATION, "reg": Task.REGRESSION}

_DEFAULTS = {
    "criterion": "mt-gr",
    "depth": 1,
    "norm": "z",
    "lr": 0.1,
    "epochs": 500,
    "tolerance": 1e-8,
    "min_leaf": None,
    "max_candidates": 255,
    "unweighted_gain": False,
    "seed": 0,
    "threads": 1,
    "k": 4,
    "stratified": False,
    "categorical": "",
    "top_k": 5,
    "n": 2000,
    "gap": 0.05,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; this tool reserves 2 for
    # training errors, so usage problems are remapped to exit 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _add_data_flags(p, with_label=True):
    p.add_argument("--data", required=True, help="input CSV file")
    if with_label:
        p.add_argument("--label", required=True, help="label column name")
        p.add_argument("--task", choices=sorted(TASKS), required=True,
                       help="clf = classification, reg = regression")
        p.add_argument("--categorical", default=None,
                       help="comma-separated categorical columns to one-hot encode")


def _add_train_flags(p, multi_criterion=False):
    if multi_criterion:
        p.add_argument("--criterion", default=None,
                       help="comma-separated criteria out of mt-dt, mt-g, mt-gr")
    else:
        p.add_argument("--criterion", choices=sorted(CRITERIA), default=None,
                       help="split criterion (default mt-gr)")
    p.add_argument("--depth", default=None,
                   help="maximum tree depth (comma list for benchmark)")
    p.add_argument("--norm", choices=[k.value for k in NormKind], default=None,
                   help="per-node feature normalization (default z)")
    p.add_argument("--lr", type=float, default=None, help="gradient-descent step size")
    p.add_argument("--epochs", type=int, default=None, help="gradient-descent epoch cap")
    p.add_argument("--tolerance", type=float, default=None,
                   help="stop when per-epoch loss improvement drops below this")
    p.add_argument("--min-leaf", dest="min_leaf", type=int, default=None,
                   help="minimum rows per side of a split (default max(5, m+1))")
    p.add_argument("--max-candidates", dest="max_candidates", type=int, default=None,
                   help="candidate thresholds per feature (default 255)")
    p.add_argument("--unweighted-gain", dest="unweighted_gain",
                   action="store_const", const=True, default=None,
                   help="score splits by plain summed squared gradient norms")
    p.add_argument("--seed", type=int, default=None, help="seed for all randomness")
    p.add_argument("--threads", type=int, default=None,
                   help="parallel feature scans; results are identical for any value")
    p.add_argument("--config", default=None, help="optional TOML config file")


def _resolve(args, keys):
    """Resolution order: explicit flag, then config file, then default."""
    table = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, "rb") as fh:
                table = tomllib.load(fh)
        except FileNotFoundError:
            raise DataError(f"{args.config}: config file not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise DataError(f"{args.config}: invalid TOML: {exc}") from None
    resolved = {}
    for key in keys:
        value = getattr(args, key, None)
        if value is None:
            value = table.get(key, _DEFAULTS[key])
        resolved[key] = value
    return resolved


_TRAIN_KEYS = (
    "criterion", "depth", "norm", "lr", "epochs", "tolerance", "min_leaf",
    "max_candidates", "unweighted_gain", "seed", "threads",
)


def _train_config(r, depth):
    if r["lr"] is not None and r["lr"] <= 0:
        raise _UsageError("--lr must be positive")
    if r["epochs"] < 0:
        raise _UsageError("--epochs must be nonnegative")
    return TrainConfig(
        max_depth=int(depth),
        criterion=CRITERIA[r["criterion"]],
        normalization=NormKind(r["norm"]),
        gd=GdConfig(
            learning_rate=float(r["lr"]),
            max_epochs=int(r["epochs"]),
            tolerance=float(r["tolerance"]),
        ),
        min_samples_leaf=r["min_leaf"],
        max_candidates=int(r["max_candidates"]),
        unweighted_gain=bool(r["unweighted_gain"]),
        seed=int(r["seed"]),
    )


def _parse_depths(text):
    try:
        depths = [int(part) for part in str(text).split(",") if part != ""]
    except ValueError:
        raise _UsageError(f"invalid depth list: {text!r}") from None
    if not depths or any(d < 0 for d in depths):
        raise _UsageError(f"invalid depth list: {text!r}")
    return depths


def _load_dataset(args):
    task = TASKS[args.task]
    categorical = [c for c in (args.categorical or "").split(",") if c]
    return load_csv(args.data, args.label, task, categorical)


def _echo_config(resolved, extra, stream):
    merged = dict(resolved)
    merged.update(extra)
    print("config: " + json.dumps(merged, sort_keys=True), file=stream)


def _print_tree_summary(tree, out):
    def walk(node, depth):
        pad = "  " * depth
        if node.is_leaf:
            print(f"{pad}leaf: n={node.n_rows}", file=out)
            return
        s = node.split
        name = tree.feature_names[s.feature]
        print(
            f"{pad}node: n={node.n_rows} split {name} <= {s.threshold:g} "
            f"(gain={s.gain:.6g}, left={s.left_count}, right={s.right_count})",
            file=out,
        )
        walk(node.left, depth + 1)
        walk(node.right, depth + 1)

    walk(tree.root, 0)


def cmd_train(args):
    r = _resolve(args, _TRAIN_KEYS)
    depths = _parse_depths(r["depth"])
    if len(depths) != 1:
        raise _UsageError("train expects a single --depth")
    cfg = _train_config(r, depths[0])
    dataset = _load_dataset(args)
    _echo_config(r, {"data": args.data, "label": args.label, "task": args.task,
                     "out": args.out}, sys.stdout)
    tree = build_tree(dataset, cfg=cfg, threads=int(r["threads"]))
    _print_tree_summary(tree, sys.stdout)
    save_model(tree, args.out)
    print(f"model written to {args.out}", file=sys.stdout)
    return 0


def _read_feature_matrix(path, feature_names):
    m = len(feature_names)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [row for row in csv.reader(fh) if row]
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    if not rows:
        raise DataError(f"{path}: file is empty")

    def parse_row(row, number):
        if len(row) != m:
            raise DataError(
                f"{path}: row {number} has {len(row)} features, model expects {m}"
            )
        try:
            values = [float(cell) for cell in row]
        except ValueError:
            raise DataError(f"{path}: row {number} has a non-numeric cell") from None
        return values

    header = [cell.strip() for cell in rows[0]]
    try:
        first = parse_row(rows[0], 1)
        data_rows = [first] + [parse_row(r, i + 2) for i, r in enumerate(rows[1:])]
        order = None
    except DataError:
        if sorted(header) != sorted(feature_names):
            if len(header) != m:
                raise DataError(
                    f"{path}: header has {len(header)} features, model expects {m}"
                ) from None
            raise DataError(
                f"{path}: header does not match the model's feature names"
            ) from None
        order = [header.index(name) for name in feature_names]
        data_rows = [parse_row(r, i + 2) for i, r in enumerate(rows[1:])]
    matrix = np.asarray(data_rows, dtype=np.float64)
    if order is not None:
        matrix = matrix[:, order]
    if not np.isfinite(matrix).all():
        raise DataError(f"{path}: feature matrix contains non-finite values")
    return matrix


def cmd_predict(args):
    # config echo goes to stderr: stdout carries the prediction stream
    _echo_config({}, {"model": args.model, "data": args.data, "out": args.out},
                 sys.stderr)
    tree = load_model(args.model)
    X = _read_feature_matrix(args.data, tree.feature_names)
    predictions = tree.predict(X)
    lines = "".join(f"{float(p)!r}\n" for p in np.atleast_1d(predictions))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(lines)
    else:
        sys.stdout.write(lines)
    return 0


def cmd_evaluate(args):
    r = _resolve(args, _TRAIN_KEYS + ("k", "stratified"))
    depths = _parse_depths(r["depth"])
    if len(depths) != 1:
        raise _UsageError("evaluate expects a single --depth")
    if int(r["k"]) < 2:
        raise _UsageError("--k must be at least 2")
    cfg = _train_config(r, depths[0])
    dataset = _load_dataset(args)
    _echo_config(r, {"data": args.data, "label": args.label, "task": args.task},
                 sys.stdout)
    result = kfold_evaluate(
        dataset, cfg, int(r["k"]), int(r["seed"]),
        stratified=bool(r["stratified"]), threads=int(r["threads"]),
    )
    for i, value in enumerate(result.fold_values, start=1):
        print(f"fold {i}: {result.metric} = {value:.6f}")
    print(f"mean {result.metric} over {len(result.fold_values)} folds: {result.mean:.6f}")
    return 0


def cmd_benchmark(args):
    r = _resolve(args, _TRAIN_KEYS + ("k", "stratified"))
    depths = _parse_depths(r["depth"])
    names = [part.strip() for part in str(r["criterion"]).split(",") if part.strip()]
    if not names:
        raise _UsageError("no criteria given")
    for part in names:
        if part not in CRITERIA:
            raise _UsageError(f"unknown criterion {part!r}")
    methods = [CRITERIA[part] for part in names]
    cfg = _train_config({**r, "criterion": names[0]}, depths[0])
    dataset = _load_dataset(args)
    _echo_config(r, {"data": args.data, "label": args.label, "task": args.task,
                     "out": args.out}, sys.stdout)
    report = benchmark(
        dataset, methods, depths, int(r["k"]), int(r["seed"]),
        base_cfg=cfg, stratified=bool(r["stratified"]), threads=int(r["threads"]),
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    sys.stdout.write(report.to_text())
    print(f"report written to {args.out}")
    return 0


def cmd_explain(args):
    top_k = args.top_k if args.top_k is not None else _DEFAULTS["top_k"]
    _echo_config({}, {"model": args.model, "top_k": top_k, "json": bool(args.json)},
                 sys.stderr)
    tree = load_model(args.model)
    explanation = explain(tree, top_k=top_k)
    if args.json:
        print(json.dumps(explanation, indent=2))
    else:
        sys.stdout.write(render_explanation(explanation))
    return 0


def cmd_synth(args):
    r = _resolve(args, ("n", "gap", "seed"))
    _echo_config(r, {"out": args.out}, sys.stdout)
    dataset = generate_v_dataset(int(r["n"]), float(r["gap"]), int(r["seed"]))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("x1,x2,y\n")
        for (x1, x2), y in zip(dataset.features, dataset.labels):
            fh.write(f"{float(x1)!r},{float(x2)!r},{int(y)}\n")
    print(f"{dataset.n_rows} rows written to {args.out}")
    return 0


def build_parser():
    parser = _Parser(prog="gradtree",
                     description="Shallow model trees with gradient-based splits.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[], help="train a model tree")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--out", default="model.json", help="model output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict with a trained model")
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--data", required=True,
                   help="CSV of feature rows (headered or headerless)")
    p.add_argument("--out", default=None, help="write predictions here instead of stdout")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="k-fold cross validation")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--k", type=int, default=None, help="fold count (default 4)")
    p.add_argument("--stratified", action="store_const", const=True, default=None,
                   help="stratify classification folds by class")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="criterion-by-depth cross-validated grid")
    _add_data_flags(p)
    _add_train_flags(p, multi_criterion=True)
    p.add_argument("--k", type=int, default=None, help="fold count (default 4)")
    p.add_argument("--stratified", action="store_const", const=True, default=None)
    p.add_argument("--out", default="benchmark.csv", help="report CSV path")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("explain", help="print the rules and leaf weight rankings")
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--top-k", dest="top_k", type=int, default=None,
                   help="weights per leaf (default 5)")
    p.add_argument("--json", action="store_true", help="emit JSON instead of text")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("synth", help="emit the V-shaped synthetic dataset as CSV")
    p.add_argument("--n", type=int, default=None, help="number of rows (default 2000)")
    p.add_argument("--gap", type=float, default=None, help="margin band width (default 0.05)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="v.csv", help="CSV output path")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ModelFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, EvalError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
