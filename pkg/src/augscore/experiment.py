"""Sweep orchestration: repeated partitioning, augmentation, proportion-grid
mixing, training, evaluation, saturation detection, and report emission.

One base seed drives everything; repetition r derives its split, mixing,
sampling, and generation seeds through domain-separated hashing of
``base_seed + r``, so a sweep is reproducible from a single number.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .augment import (
    AugmentationPool,
    MixSpec,
    build_augment_pool,
    mix_count,
    mix_training_set,
    smote_oversample,
)
from .classifier import (
    TrainConfig,
    TextClassifier,
    featurize_fit,
    featurize_matrix,
    fit_text_classifier,
    model_to_json,
    train_classifier,
)
from .dataset import Dataset, LabeledResponse, SplitPlan, load_dataset, partition, save_jsonl
from .errors import ReportError, SweepError
from .llm_client import CompletionCache, HttpBackend, MockBackend
from .metrics import METRIC_NAMES, MetricReport, compute_metrics, confusion_matrix, mean_sd
from .prompt import load_template, validate_template
from .seeding import derive_seed, keyed_sample

logger = logging.getLogger(__name__)

ARM_NAMES = ("llm_augment", "gold_standard", "smote", "none")
DEFAULT_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
SPLIT_NAMES = ("val", "test")

CELLS_HEADER = ("task", "arm", "proportion", "repetition", "split", "metric", "value", "flags")
AGGREGATES_HEADER = ("task", "arm", "proportion", "split", "metric", "mean", "sd", "n")


@dataclass(frozen=True)
class SweepConfig:
    dataset_path: str
    label_space: tuple[str, ...]
    target_class: str
    val_per_class: int
    test_per_class: int
    template_path: str | None = None
    grid: tuple[float, ...] = DEFAULT_GRID
    repetitions: int = 5
    arms: tuple[str, ...] = ("llm_augment",)
    gold_pool_path: str | None = None
    k_per_exemplar: int = 4
    base_seed: int = 0
    backend: str = "mock"
    model_name: str = "mock-model"
    endpoint: str | None = None
    timeout: float = 60.0
    max_in_flight: int = 4
    cache_dir: str | None = None
    dataset_format: str = "jsonl"
    task_id: str = ""
    completeness_floor: float = 0.9
    smote_k_neighbors: int = 5
    min_doc_freq: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    positive_class: str | None = None
    output_dir: str | None = None
    persist_models: bool = False

    def __post_init__(self):
        if self.repetitions < 1:
            raise SweepError("repetitions must be at least 1")
        if not self.grid:
            raise SweepError("proportion grid must be non-empty")
        if list(self.grid) != sorted(set(self.grid)):
            raise SweepError("proportion grid must be sorted and unique")
        if any(not 0.0 <= p <= 1.0 for p in self.grid):
            raise SweepError("proportions must lie within [0, 1]")
        unknown = [a for a in self.arms if a not in ARM_NAMES]
        if unknown:
            raise SweepError(f"unknown arms: {unknown} (expected subset of {list(ARM_NAMES)})")
        if not self.arms:
            raise SweepError("at least one arm must be enabled")
        if "gold_standard" in self.arms and not self.gold_pool_path:
            raise SweepError("gold_standard arm requires gold_pool_path")
        if "llm_augment" in self.arms and not self.template_path:
            raise SweepError("llm_augment arm requires template_path")
        if self.backend not in ("mock", "http"):
            raise SweepError(f"unknown backend {self.backend!r}")
        if self.backend == "http" and not self.endpoint:
            raise SweepError("http backend requires an endpoint")

    @property
    def effective_positive_class(self) -> str | None:
        """Binary tasks score the target class one-vs-rest; others go macro."""
        if self.positive_class is not None:
            return str(self.positive_class)
        if len(self.label_space) == 2:
            return str(self.target_class)
        return None


def load_sweep_config(path: str | Path, seed_override: int | None = None) -> SweepConfig:
    p = Path(path)
    if not p.exists():
        raise SweepError(f"no such config file: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SweepError(f"{p}: invalid JSON: {exc}") from exc
    split = raw.get("split") or {}
    train_raw = raw.get("train") or {}
    feat_raw = raw.get("featurizer") or {}
    try:
        cfg = SweepConfig(
            dataset_path=str(raw["dataset"]),
            label_space=tuple(str(c) for c in raw["label_space"]),
            target_class=str(raw["target_class"]),
            val_per_class=int(split["val_per_class"]),
            test_per_class=int(split["test_per_class"]),
            template_path=raw.get("template"),
            grid=tuple(float(x) for x in raw.get("grid", DEFAULT_GRID)),
            repetitions=int(raw.get("repetitions", 5)),
            arms=tuple(raw.get("arms", ["llm_augment"])),
            gold_pool_path=raw.get("gold_pool"),
            k_per_exemplar=int(raw.get("k_per_exemplar", 4)),
            base_seed=int(raw.get("base_seed", 0)) if seed_override is None else seed_override,
            backend=str(raw.get("backend", "mock")),
            model_name=str(raw.get("model_name", "mock-model")),
            endpoint=raw.get("endpoint"),
            timeout=float(raw.get("timeout", 60.0)),
            max_in_flight=int(raw.get("max_in_flight", 4)),
            cache_dir=raw.get("cache_dir"),
            dataset_format=str(raw.get("format", "jsonl")),
            task_id=str(raw.get("task_id", "")),
            completeness_floor=float(raw.get("completeness_floor", 0.9)),
            smote_k_neighbors=int(raw.get("smote_k_neighbors", 5)),
            min_doc_freq=int(feat_raw.get("min_doc_freq", 1)),
            train=TrainConfig(
                learning_rate=float(train_raw.get("learning_rate", 0.1)),
                epochs=int(train_raw.get("epochs", 500)),
                l2=float(train_raw.get("l2", 1e-4)),
                snapshot_interval=int(train_raw.get("snapshot_interval", 50)),
            ),
            positive_class=raw.get("positive_class"),
            output_dir=raw.get("output_dir"),
            persist_models=bool(raw.get("persist_models", False)),
        )
    except KeyError as exc:
        raise SweepError(f"{p}: missing config key {exc}") from exc
    return cfg


def config_hash(cfg: SweepConfig) -> str:
    doc = {
        "dataset_path": cfg.dataset_path,
        "label_space": list(cfg.label_space),
        "target_class": cfg.target_class,
        "val_per_class": cfg.val_per_class,
        "test_per_class": cfg.test_per_class,
        "template_path": cfg.template_path,
        "grid": list(cfg.grid),
        "repetitions": cfg.repetitions,
        "arms": list(cfg.arms),
        "gold_pool_path": cfg.gold_pool_path,
        "k_per_exemplar": cfg.k_per_exemplar,
        "base_seed": cfg.base_seed,
        "backend": cfg.backend,
        "model_name": cfg.model_name,
        "smote_k_neighbors": cfg.smote_k_neighbors,
        "min_doc_freq": cfg.min_doc_freq,
        "train": [cfg.train.learning_rate, cfg.train.epochs, cfg.train.l2, cfg.train.snapshot_interval],
        "positive_class": cfg.positive_class,
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SweepCell:
    arm: str
    proportion: float
    repetition: int
    split: str
    report: MetricReport | None
    n_added: int = 0
    error: str | None = None


@dataclass(frozen=True)
class SaturationPoint:
    proportion: float | None
    kind: str  # "slope_break" | "peak_then_decline" | "none"
    metric: str = ""


@dataclass(frozen=True, eq=False)
class SweepResult:
    task_id: str
    cells: tuple[SweepCell, ...]
    aggregates: Mapping[tuple[str, float, str, str], tuple[float, float, int]]
    provenance: Mapping[str, object]
    pools: Mapping[str, tuple[LabeledResponse, ...]] = field(default_factory=dict)
    pool_manifests: Mapping[str, Mapping[str, object]] = field(default_factory=dict)
    models: Mapping[str, str] = field(default_factory=dict)


def _rep_seeds(base_seed: int, r: int) -> dict[str, int]:
    rep = base_seed + r
    return {
        "split": derive_seed("split", rep),
        "mix": derive_seed("mix", rep),
        "generate": derive_seed("generate", rep),
        "smote": derive_seed("smote", rep),
        "gold": derive_seed("gold", rep),
        "learn": derive_seed("learn", rep),
    }


def _evaluate(scorer, data: Dataset, positive_class: str | None) -> MetricReport:
    preds, _ = scorer.predict(data.texts())
    cm = confusion_matrix(data.labels(), preds, data.label_space)
    return compute_metrics(cm, positive_class)


def _build_gold_pool(
    gold: Dataset, target_class: str, size: int, seed: int
) -> list[LabeledResponse]:
    candidates = [it for it in gold.items if it.label == target_class]
    if len(candidates) < size:
        raise SweepError(
            f"gold pool has {len(candidates)} items of class {target_class!r}; needs {size}"
        )
    sampled = keyed_sample("gold", seed, candidates, lambda it: it.id, size)
    return [replace(it, source="gold_standard") for it in sampled]


def run_sweep(cfg: SweepConfig, train_fn=None) -> SweepResult:
    """Execute the full protocol for every (arm, proportion, repetition).

    Per-cell failures are recorded as error cells and never abort the other
    cells. ``train_fn(train_texts, train_labels, val_texts, val_labels,
    label_space)`` may substitute any scorer honoring the adapter contract.
    """
    data = load_dataset(cfg.dataset_path, cfg.label_space, cfg.dataset_format, cfg.task_id)
    task = cfg.task_id or data.task_id
    non_original = [it.id for it in data.items if it.source != "original"]
    if non_original:
        raise SweepError(
            f"experiment dataset must contain only original responses; found {len(non_original)} "
            f"other rows (e.g. {non_original[0]!r})"
        )
    if str(cfg.target_class) not in data.label_space:
        raise SweepError(f"target class {cfg.target_class!r} outside label space")

    template = None
    if "llm_augment" in cfg.arms:
        template = load_template(cfg.template_path)
        issues = validate_template(template, data.label_space)
        if issues:
            raise SweepError("template invalid: " + "; ".join(issues))
    gold_data = None
    if "gold_standard" in cfg.arms:
        gold_data = load_dataset(cfg.gold_pool_path, cfg.label_space, "jsonl", "gold")

    cache = CompletionCache(cfg.cache_dir) if cfg.cache_dir else None
    positive = cfg.effective_positive_class

    if train_fn is None:
        def train_fn(train_texts, train_labels, val_texts, val_labels, label_space):
            return fit_text_classifier(
                train_texts, train_labels, val_texts, val_labels, label_space,
                cfg.train, cfg.min_doc_freq,
            )

    cells: list[SweepCell] = []
    pools: dict[str, tuple[LabeledResponse, ...]] = {}
    pool_manifests: dict[str, dict[str, object]] = {}
    models: dict[str, str] = {}
    additions: dict[str, dict[str, dict[str, int]]] = {}
    all_seeds: list[dict[str, int]] = []

    for r in range(cfg.repetitions):
        seeds = _rep_seeds(cfg.base_seed, r)
        all_seeds.append(seeds)
        splits = partition(data, SplitPlan(cfg.val_per_class, cfg.test_per_class, seeds["split"]))
        for s in (splits.val, splits.test):
            if any(it.source != "original" for it in s.items):
                raise SweepError("internal invariant violated: non-original item in val/test")
        train_set = splits.train
        n_minority = sum(1 for it in train_set.items if it.label == str(cfg.target_class))
        target_pool_size = cfg.k_per_exemplar * n_minority

        llm_pool: AugmentationPool | None = None
        if "llm_augment" in cfg.arms:
            backend = (
                MockBackend(seed=seeds["generate"])
                if cfg.backend == "mock"
                else HttpBackend(cfg.endpoint, timeout=cfg.timeout)
            )
            llm_pool = build_augment_pool(
                train_set,
                str(cfg.target_class),
                template,
                backend,
                k_per_exemplar=cfg.k_per_exemplar,
                model_name=cfg.model_name,
                learn_seed=seeds["learn"],
                cache=cache,
                completeness_floor=cfg.completeness_floor,
            )
            pools[f"rep{r}/llm_augment"] = llm_pool.items
            pool_manifests[f"rep{r}/llm_augment"] = {
                "template_version": llm_pool.template_version,
                "k_per_exemplar": llm_pool.k_per_exemplar,
                "completeness": llm_pool.completeness,
                "model_name": llm_pool.model_name,
                "size": len(llm_pool.items),
            }

        gold_pool: list[LabeledResponse] | None = None
        if "gold_standard" in cfg.arms:
            # Match the llm pool size exactly so both arms add the same counts.
            gold_size = len(llm_pool.items) if llm_pool is not None else target_pool_size
            gold_pool = _build_gold_pool(gold_data, str(cfg.target_class), gold_size, seeds["gold"])
            pools[f"rep{r}/gold_standard"] = tuple(gold_pool)
            pool_manifests[f"rep{r}/gold_standard"] = {
                "template_version": "",
                "k_per_exemplar": cfg.k_per_exemplar,
                "completeness": 1.0,
                "model_name": "",
                "size": len(gold_pool),
            }

        smote_synth: np.ndarray | None = None
        smote_featurizer = None
        if "smote" in cfg.arms:
            smote_featurizer = featurize_fit(train_set.texts(), cfg.min_doc_freq)
            X_train = featurize_matrix(smote_featurizer, train_set.texts())
            smote_synth = smote_oversample(
                X_train,
                train_set.labels(),
                str(cfg.target_class),
                cfg.smote_k_neighbors,
                target_pool_size,
                seeds["smote"],
            )

        rep_adds: dict[str, dict[str, int]] = {}
        for arm in cfg.arms:
            arm_adds: dict[str, int] = {}
            for p in cfg.grid:
                try:
                    scorer, n_added = _run_cell(
                        cfg, arm, p, train_set, splits.val, llm_pool, gold_pool,
                        smote_synth, smote_featurizer, seeds, train_fn,
                    )
                    arm_adds[repr(float(p))] = n_added
                    for split_name, split_data in (("val", splits.val), ("test", splits.test)):
                        report = _evaluate(scorer, split_data, positive)
                        cells.append(
                            SweepCell(arm, float(p), r, split_name, report, n_added=n_added)
                        )
                    if cfg.persist_models and isinstance(scorer, TextClassifier):
                        models[f"rep{r}/{arm}/p{p}"] = model_to_json(scorer)
                except Exception as exc:  # noqa: BLE001 - per-cell isolation
                    logger.exception("cell failed: arm=%s p=%s rep=%d", arm, p, r)
                    for split_name in SPLIT_NAMES:
                        cells.append(
                            SweepCell(arm, float(p), r, split_name, None, error=str(exc))
                        )
            rep_adds[arm] = arm_adds
        additions[f"rep{r}"] = rep_adds

    cells.sort(key=lambda c: (c.arm, c.proportion, c.repetition, c.split))
    provenance = {
        "config_hash": config_hash(cfg),
        "package_version": __version__,
        "task": task,
        "base_seed": cfg.base_seed,
        "repetitions": cfg.repetitions,
        "grid": [float(p) for p in cfg.grid],
        "arms": list(cfg.arms),
        "positive_class": positive,
        "rep_seeds": all_seeds,
        "additions": additions,
    }
    return SweepResult(
        task_id=task,
        cells=tuple(cells),
        aggregates=aggregate_cells(cells),
        provenance=provenance,
        pools=pools,
        pool_manifests=pool_manifests,
        models=models,
    )


def _run_cell(
    cfg: SweepConfig,
    arm: str,
    proportion: float,
    train_set: Dataset,
    val_set: Dataset,
    llm_pool: AugmentationPool | None,
    gold_pool: list[LabeledResponse] | None,
    smote_synth: np.ndarray | None,
    smote_featurizer,
    seeds: Mapping[str, int],
    train_fn,
):
    """Train one (arm, proportion) cell; returns (scorer, items added)."""
    if arm == "none":
        scorer = train_fn(
            train_set.texts(), train_set.labels(), val_set.texts(), val_set.labels(),
            train_set.label_space,
        )
        return scorer, 0

    if arm in ("llm_augment", "gold_standard"):
        pool_items = llm_pool.items if arm == "llm_augment" else tuple(gold_pool)
        mixed = mix_training_set(train_set, pool_items, MixSpec(proportion, seeds["mix"]))
        scorer = train_fn(
            mixed.texts(), mixed.labels(), val_set.texts(), val_set.labels(), mixed.label_space
        )
        return scorer, len(mixed) - len(train_set)

    if arm == "smote":
        n_add = mix_count(proportion, len(smote_synth))
        X_train = featurize_matrix(smote_featurizer, train_set.texts())
        X = np.vstack([X_train, smote_synth[:n_add]])
        y = list(train_set.labels()) + [str(cfg.target_class)] * n_add
        Xv = featurize_matrix(smote_featurizer, val_set.texts())
        model = train_classifier(X, y, Xv, val_set.labels(), cfg.train, train_set.label_space)
        return TextClassifier(featurizer=smote_featurizer, model=model), n_add

    raise SweepError(f"unknown arm {arm!r}")


def aggregate_cells(
    cells: Sequence[SweepCell],
) -> dict[tuple[str, float, str, str], tuple[float, float, int]]:
    """Mean/sd/n per (arm, proportion, split, metric) over repetitions."""
    groups: dict[tuple[str, float, str], list[SweepCell]] = {}
    for c in cells:
        if c.report is None:
            continue
        groups.setdefault((c.arm, c.proportion, c.split), []).append(c)
    out: dict[tuple[str, float, str, str], tuple[float, float, int]] = {}
    for (arm, p, split), group in groups.items():
        group.sort(key=lambda c: c.repetition)
        for metric in METRIC_NAMES:
            values = [c.report.value(metric) for c in group]
            m, sd = mean_sd(values)
            out[(arm, p, split, metric)] = (m, sd, len(values))
    return out


def detect_saturation(
    grid: Sequence[float],
    means: Sequence[float],
    theta: float = 0.5,
    delta: float = 0.01,
    metric: str = "",
) -> SaturationPoint:
    """Find where the metric-versus-proportion slope breaks or peaks.

    The proportion axis is normalized to [0, 1] before slopes are taken, so
    the decision depends only on the shape of the series, not its scale. A
    decline after any positive slope reports the running maximum as a peak;
    otherwise a slope falling to at most ``theta`` times a materially
    positive predecessor (> ``delta``) reports a slope break at its start.
    """
    if len(grid) != len(means):
        raise SweepError(f"grid and means differ in length: {len(grid)} vs {len(means)}")
    if len(grid) < 3:
        raise SweepError("saturation detection needs at least 3 grid points")
    if list(grid) != sorted(set(grid)):
        raise SweepError("grid must be strictly increasing")
    span = grid[-1] - grid[0]
    xs = [(p - grid[0]) / span for p in grid]
    slopes = [(means[i + 1] - means[i]) / (xs[i + 1] - xs[i]) for i in range(len(xs) - 1)]

    positive_seen = False
    for i, d in enumerate(slopes):
        if d > 0:
            positive_seen = True
        elif d < 0 and positive_seen:
            peak = max(range(i + 1), key=lambda j: (means[j], -j))
            return SaturationPoint(float(grid[peak]), "peak_then_decline", metric)

    for i in range(len(slopes) - 1):
        if slopes[i] > delta and slopes[i + 1] <= theta * slopes[i]:
            return SaturationPoint(float(grid[i + 1]), "slope_break", metric)
    return SaturationPoint(None, "none", metric)


@dataclass(frozen=True)
class ArmComparisonRow:
    proportion: float
    split: str
    mean_a: float | None
    sd_a: float | None
    mean_b: float | None
    sd_b: float | None

    @property
    def difference(self) -> float | None:
        if self.mean_a is None or self.mean_b is None:
            return None
        return self.mean_a - self.mean_b


Aggregates = Mapping[tuple[str, float, str, str], tuple[float, float, int]]


def compare_arms(
    source: SweepResult | Aggregates, arm_a: str, arm_b: str, metric: str
) -> list[ArmComparisonRow]:
    """Per-(proportion, split) mean differences a minus b with both sds."""
    aggregates: Aggregates = source.aggregates if isinstance(source, SweepResult) else source
    if metric not in METRIC_NAMES:
        raise SweepError(f"unknown metric {metric!r}")
    arms_present = {k[0] for k in aggregates}
    for arm in (arm_a, arm_b):
        if arm not in arms_present:
            raise SweepError(f"arm {arm!r} not present in results")
    keys = sorted({(k[1], k[2]) for k in aggregates if k[0] in (arm_a, arm_b) and k[3] == metric})
    rows = []
    for p, split in keys:
        a = aggregates.get((arm_a, p, split, metric))
        b = aggregates.get((arm_b, p, split, metric))
        rows.append(
            ArmComparisonRow(
                proportion=p,
                split=split,
                mean_a=a[0] if a else None,
                sd_a=a[1] if a else None,
                mean_b=b[0] if b else None,
                sd_b=b[1] if b else None,
            )
        )
    return rows


def _fmt(x: float) -> str:
    return repr(float(x))


def _cell_flags(cell: SweepCell, metric: str) -> str:
    if cell.error is not None:
        return f"error:{cell.error}"
    flags = [
        f for f in sorted(cell.report.undefined_flags)
        if f == metric or f.startswith(f"{metric}[")
    ]
    return ";".join(flags)


def cells_csv_text(task: str, cells: Sequence[SweepCell]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CELLS_HEADER)
    for c in cells:
        for metric in METRIC_NAMES:
            value = "" if c.report is None else _fmt(c.report.value(metric))
            w.writerow(
                [task, c.arm, _fmt(c.proportion), c.repetition, c.split, metric, value, _cell_flags(c, metric)]
            )
    return buf.getvalue()


def aggregates_csv_text(task: str, aggregates: Aggregates) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATES_HEADER)
    for (arm, p, split, metric), (m, sd, n) in sorted(
        aggregates.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2], METRIC_NAMES.index(kv[0][3]))
    ):
        w.writerow([task, arm, _fmt(p), split, metric, _fmt(m), _fmt(sd), n])
    return buf.getvalue()


def load_cells_csv(path: str | Path) -> tuple[str, list[SweepCell]]:
    """Rebuild per-metric value series from cells.csv for re-aggregation.

    Rows carry one metric each, so the reconstructed cells hold one metric
    value in a minimal report; aggregation only ever reads that one metric.
    """
    p = Path(path)
    if not p.exists():
        raise ReportError(f"no such file: {p}")
    rows: dict[tuple[str, float, int, str], dict[str, float]] = {}
    task = ""
    with p.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CELLS_HEADER:
            raise ReportError(f"{p}: unexpected header {reader.fieldnames}")
        for rec in reader:
            task = rec["task"]
            if rec["value"] == "":
                continue
            key = (rec["arm"], float(rec["proportion"]), int(rec["repetition"]), rec["split"])
            rows.setdefault(key, {})[rec["metric"]] = float(rec["value"])
    cells = []
    for (arm, p_, rep, split), metrics_map in rows.items():
        missing = [m for m in METRIC_NAMES if m not in metrics_map]
        if missing:
            raise ReportError(f"cells.csv missing metrics {missing} for {(arm, p_, rep, split)}")
        report = MetricReport(
            accuracy=metrics_map["accuracy"],
            precision=metrics_map["precision"],
            recall=metrics_map["recall"],
            f1=metrics_map["f1"],
            averaging="binary_positive",
        )
        cells.append(SweepCell(arm, p_, rep, split, report))
    cells.sort(key=lambda c: (c.arm, c.proportion, c.repetition, c.split))
    return task, cells


def load_aggregates_csv(path: str | Path) -> tuple[str, dict[tuple[str, float, str, str], tuple[float, float, int]]]:
    p = Path(path)
    if not p.exists():
        raise ReportError(f"no such file: {p}")
    out: dict[tuple[str, float, str, str], tuple[float, float, int]] = {}
    task = ""
    with p.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != AGGREGATES_HEADER:
            raise ReportError(f"{p}: unexpected header {reader.fieldnames}")
        for rec in reader:
            task = rec["task"]
            key = (rec["arm"], float(rec["proportion"]), rec["split"], rec["metric"])
            out[key] = (float(rec["mean"]), float(rec["sd"]), int(rec["n"]))
    return task, out


def saturation_records(aggregates: Aggregates, theta: float = 0.5, delta: float = 0.01) -> list[dict]:
    """Detected saturation per (arm, split, metric) where the grid allows it."""
    arms = sorted({k[0] for k in aggregates})
    splits = sorted({k[2] for k in aggregates})
    records = []
    for arm in arms:
        for split in splits:
            for metric in METRIC_NAMES:
                series = sorted(
                    (k[1], v[0]) for k, v in aggregates.items()
                    if k[0] == arm and k[2] == split and k[3] == metric
                )
                if len(series) < 3:
                    continue
                grid = [p for p, _ in series]
                means = [m for _, m in series]
                point = detect_saturation(grid, means, theta, delta, metric)
                records.append(
                    {
                        "arm": arm,
                        "split": split,
                        "metric": metric,
                        "kind": point.kind,
                        "proportion": point.proportion,
                    }
                )
    return records


def emit_report(
    res: SweepResult,
    out_dir: str | Path,
    formats: Sequence[str] = ("csv", "json"),
    force: bool = False,
) -> list[Path]:
    """Write cells/aggregates CSVs, manifest, saturation, and pool files.

    Identical results produce byte-identical files. An existing non-empty
    directory is refused unless ``force`` is set.
    """
    unknown = [f for f in formats if f not in ("csv", "json")]
    if unknown:
        raise ReportError(f"unknown formats: {unknown}")
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise ReportError(f"output directory {out} is not empty (pass force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if "csv" in formats:
        cells_path = out / "cells.csv"
        cells_path.write_text(cells_csv_text(res.task_id, res.cells), encoding="utf-8")
        written.append(cells_path)
        agg_path = out / "aggregates.csv"
        agg_path.write_text(aggregates_csv_text(res.task_id, res.aggregates), encoding="utf-8")
        written.append(agg_path)

    if "json" in formats:
        manifest = {
            "provenance": res.provenance,
            "pool_manifests": res.pool_manifests,
        }
        manifest_path = out / "manifest.json"
        manifest_path.write_text(
            json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        written.append(manifest_path)
        sat_path = out / "saturation.json"
        sat_path.write_text(
            json.dumps(saturation_records(res.aggregates), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        written.append(sat_path)

    if res.pools:
        pools_dir = out / "pools"
        pools_dir.mkdir(exist_ok=True)
        for key in sorted(res.pools):
            name = key.replace("/", "_")
            pool_path = pools_dir / f"{name}.jsonl"
            save_jsonl(res.pools[key], pool_path)
            written.append(pool_path)
            manifest_path = pools_dir / f"{name}.manifest.json"
            manifest_path.write_text(
                json.dumps(res.pool_manifests.get(key, {}), indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
            written.append(manifest_path)

    if res.models:
        models_dir = out / "models"
        models_dir.mkdir(exist_ok=True)
        for key in sorted(res.models):
            path = models_dir / (key.replace("/", "_") + ".json")
            path.write_text(res.models[key], encoding="utf-8")
            written.append(path)
    return written
