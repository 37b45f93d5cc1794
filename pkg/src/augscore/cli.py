"""Command-line entry point binding all modules into user-facing commands.

Exit codes: 0 success, 1 runtime error, 2 usage error. Runtime errors print
a single ``error: <message>`` line on stderr.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .augment import build_augment_pool
from .classifier import TrainConfig, fit_text_classifier, load_model, save_model
from .dataset import class_histogram, load_dataset, save_jsonl
from .errors import AugScoreError
from .experiment import (
    aggregate_cells,
    aggregates_csv_text,
    compare_arms,
    detect_saturation,
    emit_report,
    load_aggregates_csv,
    load_cells_csv,
    load_sweep_config,
    run_sweep,
    saturation_records,
)
from .llm_client import HttpBackend, MockBackend, CompletionCache
from .metrics import compute_metrics, confusion_matrix
from .prompt import load_template, validate_template


def _labels_arg(raw: str) -> list[str]:
    labels = [c.strip() for c in raw.split(",") if c.strip()]
    if not labels:
        raise argparse.ArgumentTypeError("label space must name at least one class")
    return labels


def _infer_format(path: str, explicit: str | None) -> str:
    if explicit:
        return explicit
    return "csv" if Path(path).suffix.lower() == ".csv" else "jsonl"


def cmd_analyze(args) -> int:
    data = load_dataset(args.data, args.labels, _infer_format(args.data, args.format))
    hist = class_histogram(data)
    total = len(data)
    print(f"task: {data.task_id}")
    print(f"items: {total}")
    for label, count in hist.items():
        share = count / total if total else 0.0
        print(f"class {label}: {count} ({share:.4f})")
    if total and min(hist.values()) > 0:
        minority = min(hist, key=lambda c: (hist[c], data.label_space.index(c)))
        majority = max(hist, key=lambda c: (hist[c], -data.label_space.index(c)))
        print(f"minority class: {minority}")
        print(f"minority share: {hist[minority]}/{total} = {hist[minority] / total:.4f}")
        print(f"imbalance ratio (majority:minority): {hist[majority] / hist[minority]:.2f}")
    return 0


def cmd_validate_prompt(args) -> int:
    template = load_template(args.template)
    labels = args.labels if args.labels else None
    issues = validate_template(template, labels)
    if not issues:
        print("template valid")
        return 0
    for issue in issues:
        print(f"issue: {issue}")
    return 1


def cmd_augment(args) -> int:
    data = load_dataset(args.data, args.labels, _infer_format(args.data, args.format))
    template = load_template(args.template)
    hist = class_histogram(data)
    target = args.target_class or min(hist, key=lambda c: (hist[c], data.label_space.index(c)))
    if args.backend == "mock":
        backend = MockBackend(seed=args.seed)
    else:
        backend = HttpBackend(args.endpoint, timeout=args.timeout)
    cache = CompletionCache(args.cache_dir) if args.cache_dir else None
    pool = build_augment_pool(
        data,
        target,
        template,
        backend,
        k_per_exemplar=args.k,
        model_name=args.model,
        learn_seed=args.seed,
        cache=cache,
    )
    out = Path(args.out)
    save_jsonl(pool.items, out)
    manifest = {
        "template_version": pool.template_version,
        "k_per_exemplar": pool.k_per_exemplar,
        "completeness": pool.completeness,
        "model_name": pool.model_name,
        "size": len(pool.items),
        "target_class": pool.target_class,
    }
    manifest_path = out.with_suffix(out.suffix + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"pool: {len(pool.items)} items ({pool.completeness:.3f} complete) -> {out}")
    return 0


def cmd_train(args) -> int:
    data = load_dataset(args.data, args.labels, _infer_format(args.data, args.format))
    val_texts = val_labels = None
    if args.val_data:
        val = load_dataset(args.val_data, args.labels, _infer_format(args.val_data, args.format))
        val_texts, val_labels = val.texts(), val.labels()
    config = TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, l2=args.l2, snapshot_interval=args.snapshot_interval
    )
    clf = fit_text_classifier(
        data.texts(), data.labels(), val_texts, val_labels, data.label_space, config, args.min_df
    )
    save_model(args.out, clf)
    print(f"model: {len(clf.featurizer.vocabulary)} features, classes {list(clf.label_space)} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    clf = load_model(args.model)
    data = load_dataset(args.data, clf.label_space, _infer_format(args.data, args.format))
    preds, probs = clf.predict(data.texts())
    if args.probs_out:
        with open(args.probs_out, "w", encoding="utf-8") as fh:
            for item, row in zip(data.items, probs):
                fh.write(json.dumps({"id": item.id, "probs": [float(v) for v in row]}) + "\n")
    positive = None if args.macro else (args.positive if args.positive is not None else None)
    if positive is None and not args.macro and len(clf.label_space) == 2:
        positive = clf.label_space[-1]
    report = compute_metrics(confusion_matrix(data.labels(), preds, clf.label_space), positive)
    for name in ("accuracy", "precision", "recall", "f1"):
        flag = " (undefined)" if name in report.undefined_flags else ""
        print(f"{name}: {report.value(name):.4f}{flag}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_sweep_config(args.config, seed_override=args.seed)
    out_dir = args.out or cfg.output_dir
    if not out_dir:
        raise AugScoreError("no output directory: set output_dir in the config or pass --out")
    if args.fresh and cfg.cache_dir:
        # Drop cached completions so generation runs fresh.
        for f in Path(cfg.cache_dir).glob("*.json"):
            f.unlink()
    result = run_sweep(cfg)
    written = emit_report(result, out_dir, force=args.force)
    errors = sum(1 for c in result.cells if c.error is not None)
    print(f"cells: {len(result.cells)} ({errors} failed)")
    print(f"wrote: {out_dir} ({len(written)} files)")
    return 0


def cmd_saturation(args) -> int:
    _, aggregates = load_aggregates_csv(args.aggregates)
    arms = sorted({k[0] for k in aggregates})
    if args.arm:
        if args.arm not in arms:
            raise AugScoreError(f"arm {args.arm!r} not present in {args.aggregates}")
        arms = [args.arm]
    found = False
    for arm in arms:
        series = sorted(
            (k[1], v[0]) for k, v in aggregates.items()
            if k[0] == arm and k[2] == args.split and k[3] == args.metric
        )
        if len(series) < 3:
            continue
        found = True
        point = detect_saturation(
            [p for p, _ in series], [m for _, m in series], args.theta, args.delta, args.metric
        )
        where = "none" if point.proportion is None else f"{point.proportion:g}"
        print(f"{arm} {args.split} {args.metric}: {point.kind} at {where}")
    if not found:
        raise AugScoreError("fewer than 3 grid points available for saturation detection")
    return 0


def cmd_report(args) -> int:
    task, cells = load_cells_csv(args.cells)
    aggregates = aggregate_cells(cells)
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise AugScoreError(f"output directory {out} is not empty (pass --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    agg_path = out / "aggregates.csv"
    agg_path.write_text(aggregates_csv_text(task, aggregates), encoding="utf-8")
    sat_path = out / "saturation.json"
    sat_path.write_text(json.dumps(saturation_records(aggregates), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote: {agg_path}")
    print(f"wrote: {sat_path}")
    return 0


def cmd_compare(args) -> int:
    _, aggregates = load_aggregates_csv(args.aggregates)
    arm_a, arm_b = args.arms
    rows = compare_arms(aggregates, arm_a, arm_b, args.metric)
    if args.split:
        rows = [r for r in rows if r.split == args.split]
    print(f"proportion  split  {arm_a}(mean/sd)  {arm_b}(mean/sd)  diff")
    for r in rows:
        def cell(mean, sd):
            return "-" if mean is None else f"{mean:.4f}/{sd:.4f}"
        diff = "-" if r.difference is None else f"{r.difference:+.4f}"
        print(f"{r.proportion:<10g}  {r.split:<5}  {cell(r.mean_a, r.sd_a)}  {cell(r.mean_b, r.sd_b)}  {diff}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="augscore",
        description="Data augmentation and sweep evaluation for imbalanced scoring datasets.",
    )
    parser.add_argument("--version", action="version", version=f"augscore {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="print class histogram and imbalance ratio")
    p.add_argument("data")
    p.add_argument("--labels", type=_labels_arg, required=True, help="comma-separated label space")
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("validate-prompt", help="validate a template file; exit 0 iff valid")
    p.add_argument("template")
    p.add_argument("--labels", type=_labels_arg, help="label space to check target_group against")
    p.set_defaults(fn=cmd_validate_prompt)

    p = sub.add_parser("augment", help="build an augmentation pool")
    p.add_argument("--data", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", type=_labels_arg, required=True)
    p.add_argument("--target-class", dest="target_class")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--backend", choices=("mock", "http"), default="mock")
    p.add_argument("--endpoint")
    p.add_argument("--model", default="mock-model")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("train", help="train the reference classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", type=_labels_arg, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--val-data", dest="val_data")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--snapshot-interval", type=int, default=50)
    p.add_argument("--min-df", type=int, default=1)
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score a dataset with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--positive", help="positive class for binary metrics")
    p.add_argument("--macro", action="store_true", help="macro-average over classes")
    p.add_argument("--probs-out", dest="probs_out", help="write {id, probs} JSONL here")
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="run the full augmentation sweep protocol")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the config's output_dir")
    p.add_argument("--force", action="store_true")
    p.add_argument("--fresh", action="store_true", help="regenerate instead of reading the cache")
    p.add_argument("--seed", type=int, help="override the config's base seed")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("saturation", help="detect the saturation point from aggregates.csv")
    p.add_argument("--aggregates", required=True)
    p.add_argument("--metric", required=True, choices=("accuracy", "precision", "recall", "f1"))
    p.add_argument("--arm")
    p.add_argument("--split", default="test", choices=("val", "test"))
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=0.01)
    p.set_defaults(fn=cmd_saturation)

    p = sub.add_parser("report", help="recompute aggregates and saturation from cells.csv")
    p.add_argument("--cells", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("compare", help="difference table between two arms")
    p.add_argument("--aggregates", required=True)
    p.add_argument("--arms", required=True, type=lambda s: [a.strip() for a in s.split(",")])
    p.add_argument("--metric", required=True, choices=("accuracy", "precision", "recall", "f1"))
    p.add_argument("--split", choices=("val", "test"))
    p.set_defaults(fn=cmd_compare)
    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints usage itself
        return int(exc.code or 0)
    if getattr(args, "command", None) == "compare" and len(args.arms) != 2:
        print("error: --arms expects exactly two comma-separated arm names", file=sys.stderr)
        return 2
    try:
        return int(args.fn(args))
    except AugScoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
