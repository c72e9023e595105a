"""Command-line workflows: train, explain, diff, audit, outliers, export-prox.

Every command writes its primary outputs plus a manifest.json (resolved
options, input digests, tool version, wall-clock duration) into the --out
directory, so a run can be reproduced from the manifest alone. Exit codes:
0 success, 2 bad input, 3 internal error.
"""

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .audit import audit_summary
from .contribution import explain, misclassification_diff
from .dataset import (binarize_dataset, fit_binarizer, load_csv, load_idx,
                      split_holdout)
from .forest import (TrainConfig, accuracy, load_model, predict, save_model,
                     train)
from .proximity import build_store, export_distance_matrix, outlier_scores
from .report import export_heatmap_pgm, export_report_csv, export_report_json

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _add_data_args(p, with_labels=True):
    p.add_argument("--data", required=True, help="dataset file (CSV, or IDX images)")
    p.add_argument("--format", choices=("csv", "idx"), default="csv")
    p.add_argument("--labels", help="IDX label file (required with --format idx)")
    p.add_argument("--label-col", default="-1",
                   help="CSV label column name or index (default: last column)")
    p.add_argument("--no-header", action="store_true", help="CSV file has no header row")
    p.add_argument("--pixel-threshold", type=int, default=128,
                   help="IDX pixel binarization threshold (ignored when a model "
                        "carries its own)")


def _parse_label_col(text):
    try:
        return int(text)
    except ValueError:
        return text


def _load_binary(args, spec=None):
    """Load --data as a BinaryDataset, binarizing CSV rows with ``spec``
    when a model's spec is given (spec=None only makes sense for IDX)."""
    if args.format == "idx":
        if not args.labels:
            raise ValueError("--format idx requires --labels")
        threshold = args.pixel_threshold
        if spec is not None and spec.pixel_threshold is not None:
            threshold = spec.pixel_threshold
        return load_idx(args.data, args.labels, pixel_threshold=threshold)
    raw = load_csv(args.data, label_column=_parse_label_col(args.label_col),
                   has_header=not args.no_header)
    if spec is None:
        raise ValueError("CSV data needs a fitted binarization spec")
    return binarize_dataset(spec, raw)


def _input_digests(args):
    digests = {}
    for name in ("data", "labels", "model", "model_a", "model_b", "vector_file"):
        path = getattr(args, name, None)
        if path:
            digests[name] = _sha256(path)
    return digests


def _write_manifest(args, out_dir, started, seed=None):
    manifest = {
        "command": args.command,
        "options": {k: v for k, v in sorted(vars(args).items())
                    if k not in ("command", "func")},
        "seed": seed,
        "input_digests": _input_digests(args),
        "tool_version": __version__,
        "duration_seconds": time.time() - started,
    }
    with open(Path(out_dir) / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_id(path):
    return _sha256(path)[:16]


def _parse_grid(text):
    try:
        rows, cols = text.lower().split("x")
        return int(rows), int(cols)
    except (ValueError, AttributeError):
        raise ValueError(f"--grid expects RxC (e.g. 28x28), got {text!r}") from None


def cmd_train(args):
    out = _out_dir(args)
    started = time.time()
    if args.format == "idx":
        full = _load_binary(args)
    else:
        raw = load_csv(args.data, label_column=_parse_label_col(args.label_col),
                       has_header=not args.no_header)
        spec = fit_binarizer(raw, max_splits_per_feature=args.max_splits_per_feature)
        full = binarize_dataset(spec, raw)

    holdout_accs = []
    model = None
    train_acc = None
    for r in range(args.repeat):
        seed = args.seed + r
        part_train, part_test = split_holdout(full, args.holdout, seed)
        config = TrainConfig(tree_count=args.trees, max_depth=args.max_depth,
                             min_leaf_size=args.min_leaf, seed=seed)
        forest = train(part_train, config)
        holdout_accs.append(accuracy(forest, part_test))
        if r == 0:
            model = forest
            train_acc = accuracy(forest, part_train)

    save_model(model, out / "model.json")
    print(f"train_accuracy={train_acc:.6f}")
    print(f"holdout_accuracy={holdout_accs[0]:.6f}")
    if args.repeat > 1:
        accs = np.array(holdout_accs)
        print(f"holdout_accuracy_mean={accs.mean():.6f}")
        print(f"holdout_accuracy_sd={accs.std():.6f}")
        print(f"repeats={args.repeat}")
    _write_manifest(args, out, started, seed=args.seed)
    return EXIT_OK


def _load_instance(args, data):
    if args.vector_file:
        text = Path(args.vector_file).read_text(encoding="utf-8").split()
        v = np.array([int(tok) for tok in text], dtype=np.uint8)
        if ((v != 0) & (v != 1)).any():
            raise ValueError(f"{args.vector_file}: vector values must be 0 or 1")
        return v, f"vector:{Path(args.vector_file).name}"
    index = args.index
    if index is None:
        raise ValueError("give --index or --vector-file")
    if not 0 <= index < len(data):
        raise ValueError(f"--index {index} out of range for {len(data)} instances")
    return data.vectors[index], f"index:{index}"


def cmd_explain(args):
    out = _out_dir(args)
    started = time.time()
    forest = load_model(args.model)
    data = _load_binary(args, spec=forest.spec)
    store = build_store(forest, data)
    v, instance_id = _load_instance(args, data)
    report = explain(forest, store, v, target_class=args.target_class,
                     parallel=args.parallel, normalize=args.normalize,
                     instance_id=instance_id, model_id=_model_id(args.model))
    export_report_json(report, out / "report.json")
    export_report_csv(report, out / "report.csv")
    if args.grid:
        shape = _parse_grid(args.grid)
        export_heatmap_pgm(report.contributions, shape, out / "heatmap.pgm",
                           scale="symmetric")
    print(f"predicted_class={report.predicted_class}")
    print(f"target_class={report.target_class}")
    _write_manifest(args, out, started)
    return EXIT_OK


def cmd_diff(args):
    out = _out_dir(args)
    started = time.time()
    forest = load_model(args.model)
    data = _load_binary(args, spec=forest.spec)
    store = build_store(forest, data)
    v, instance_id = _load_instance(args, data)

    predicted, _votes = predict(forest, v)
    wrong = args.wrong_class if args.wrong_class is not None else predicted
    if args.right_class is not None:
        right = args.right_class
    else:
        if args.index is None:
            raise ValueError("--right-class is required with --vector-file")
        right = int(data.labels[args.index])
        if wrong == right and args.wrong_class is None:
            raise ValueError(
                f"instance {instance_id} is correctly classified (class {right}); "
                "give --wrong-class/--right-class explicitly"
            )

    model_id = _model_id(args.model)
    report_wrong = explain(forest, store, v, target_class=wrong,
                           normalize=args.normalize, instance_id=instance_id,
                           model_id=model_id)
    report_right = explain(forest, store, v, target_class=right,
                           normalize=args.normalize, instance_id=instance_id,
                           model_id=model_id)
    diff = misclassification_diff(report_wrong, report_right)

    export_report_json(report_wrong, out / "report_wrong.json")
    export_report_csv(report_wrong, out / "report_wrong.csv")
    export_report_json(report_right, out / "report_right.json")
    export_report_csv(report_right, out / "report_right.csv")
    with open(out / "diff.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("feature_index,name,squared_diff\n")
        names = report_wrong.feature_names
        for k, val in enumerate(diff):
            name = names[k] if names else f"f{k}"
            fh.write(f"{k},{name},{val:.6f}\n")
    if args.grid:
        shape = _parse_grid(args.grid)
        export_heatmap_pgm(report_wrong.contributions, shape,
                           out / "heatmap_wrong.pgm", scale="symmetric")
        export_heatmap_pgm(report_right.contributions, shape,
                           out / "heatmap_right.pgm", scale="symmetric")
        export_heatmap_pgm(diff, shape, out / "diff.pgm", scale="minmax")
    print(f"predicted_class={predicted}")
    print(f"wrong_class={wrong}")
    print(f"right_class={right}")
    _write_manifest(args, out, started)
    return EXIT_OK


def cmd_audit(args):
    out = _out_dir(args)
    started = time.time()
    forest_a = load_model(args.model_a)
    forest_b = load_model(args.model_b)
    if forest_a.feature_count != forest_b.feature_count:
        raise ValueError(
            f"models disagree on feature count: {forest_a.feature_count} vs "
            f"{forest_b.feature_count}"
        )
    data = _load_binary(args, spec=forest_a.spec)
    store_a = build_store(forest_a, data)
    store_b = build_store(forest_b, data)
    id_a = _model_id(args.model_a)
    id_b = _model_id(args.model_b)

    reports_a, reports_b = [], []
    for i in range(len(data)):
        v = data.vectors[i]
        reports_a.append(explain(forest_a, store_a, v, target_class=args.high_class_a,
                                 instance_id=f"index:{i}", model_id=id_a))
        reports_b.append(explain(forest_b, store_b, v, target_class=args.high_class_b,
                                 instance_id=f"index:{i}", model_id=id_b))

    doc = audit_summary(reports_a, reports_b, args.high_class_a, args.high_class_b,
                        threshold=args.threshold, mode=args.filter_mode)
    doc["model_a"] = id_a
    doc["model_b"] = id_b
    doc["instance_count"] = len(data)
    with open(out / "audit.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")
    print(f"pair_count={doc['pair_count']}")
    print(f"pearson_r={doc['pearson_r']:.6f}")
    print(f"spearman_rho={doc['spearman_rho']:.6f}")
    print(f"kendall_tau={doc['kendall_tau']:.6f}")
    print(f"chi_square={doc['chi_square']['statistic']:.2f}")
    _write_manifest(args, out, started)
    return EXIT_OK


def cmd_outliers(args):
    out = _out_dir(args)
    started = time.time()
    forest = load_model(args.model)
    data = _load_binary(args, spec=forest.spec)
    store = build_store(forest, data)
    scores, flags = outlier_scores(store)
    with open(out / "outliers.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("index,predicted_class,true_class,score,flag\n")
        for i in range(len(store)):
            fh.write(f"{i},{store.predicted_labels[i]},{store.true_labels[i]},"
                     f"{scores[i]:.6f},{int(flags[i])}\n")
    print(f"flagged={int(flags.sum())}")
    _write_manifest(args, out, started)
    return EXIT_OK


def cmd_export_prox(args):
    out = _out_dir(args)
    started = time.time()
    forest = load_model(args.model)
    data = _load_binary(args, spec=forest.spec)
    store = build_store(forest, data)
    export_distance_matrix(store, out / "proximity.csv")
    print(f"instances={len(store)}")
    _write_manifest(args, out, started)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="proxiflip",
        description="Random-forest training and proximity-space decision explanations",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a forest and report accuracy")
    _add_data_args(p)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--max-splits-per-feature", type=int, default=4)
    p.add_argument("--holdout", type=float, default=0.5,
                   help="holdout fraction in (0,1)")
    p.add_argument("--repeat", type=int, default=1,
                   help="average holdout accuracy over this many seeded permutations")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="per-feature contribution report for one instance")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--index", type=int, help="instance index into --data")
    p.add_argument("--vector-file", help="file with one line of space-separated bits")
    p.add_argument("--target-class", type=int, default=None)
    p.add_argument("--normalize", action="store_true",
                   help="divide contributions by the training-set size")
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--grid", help="RxC heatmap shape, e.g. 28x28")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("diff", help="wrong-vs-right contribution maps and squared diff")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--index", type=int)
    p.add_argument("--vector-file")
    p.add_argument("--wrong-class", type=int, default=None)
    p.add_argument("--right-class", type=int, default=None)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--grid", help="RxC heatmap shape, e.g. 28x28")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("audit", help="cross-model contribution comparison statistics")
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    _add_data_args(p)
    p.add_argument("--high-class-a", type=int, required=True)
    p.add_argument("--high-class-b", type=int, required=True)
    p.add_argument("--threshold", type=float, default=0.0001)
    p.add_argument("--filter-mode", choices=("both", "either"), default="both")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("outliers", help="decision-space outlier scores for the training set")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_outliers)

    p = sub.add_parser("export-prox", help="full proximity-distance matrix as CSV")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_prox)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # invariant violations and genuine bugs
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def console_main():
    sys.exit(main())
