"""Loading, inspecting, and partitioning labeled response datasets.

Labels are canonicalized to strings on the way in, so a JSONL ``"label": 1``
and a CSV ``label=1`` both land on the declared class ``"1"``. The label
space is always declared up front; inferring it from the data is refused so
mislabeled rows fail loudly.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import DatasetError
from .seeding import keyed_order

SOURCES = ("original", "augmented", "gold_standard")


@dataclass(frozen=True)
class LabeledResponse:
    """One student (or synthetic) answer with its class label and provenance."""

    id: str
    text: str
    label: str
    elements: Mapping[str, int] | None = None
    source: str = "original"
    parent_id: str | None = None

    def __post_init__(self):
        if not self.id:
            raise DatasetError("response id must be non-empty")
        if not self.text:
            raise DatasetError(f"response {self.id!r}: text must be non-empty")
        if self.source not in SOURCES:
            raise DatasetError(f"response {self.id!r}: unknown source {self.source!r}")
        if self.source == "augmented" and not self.parent_id:
            raise DatasetError(f"response {self.id!r}: augmented items need a parent_id")
        if self.elements is not None:
            bad = {k: v for k, v in self.elements.items() if v not in (0, 1)}
            if bad:
                raise DatasetError(f"response {self.id!r}: element bits must be 0/1, got {bad}")


@dataclass(frozen=True)
class Dataset:
    items: tuple[LabeledResponse, ...]
    label_space: tuple[str, ...]
    task_id: str = ""

    def __post_init__(self):
        if not self.label_space:
            raise DatasetError("label space must be non-empty")
        if len(set(self.label_space)) != len(self.label_space):
            raise DatasetError("label space contains duplicates")
        seen: set[str] = set()
        space = set(self.label_space)
        for it in self.items:
            if it.id in seen:
                raise DatasetError(f"duplicate id: {it.id!r}")
            seen.add(it.id)
            if it.label not in space:
                raise DatasetError(
                    f"response {it.id!r}: label {it.label!r} outside label space {list(self.label_space)}"
                )

    def __len__(self) -> int:
        return len(self.items)

    def texts(self) -> list[str]:
        return [it.text for it in self.items]

    def labels(self) -> list[str]:
        return [it.label for it in self.items]


@dataclass(frozen=True)
class SplitPlan:
    """Balanced validation/test sizes per class plus the draw seed."""

    val_per_class: int
    test_per_class: int
    seed: int

    def __post_init__(self):
        if self.val_per_class < 0 or self.test_per_class < 0:
            raise DatasetError("split counts must be non-negative")


@dataclass(frozen=True)
class Splits:
    train: Dataset
    val: Dataset
    test: Dataset


def _normalize_label_space(label_space: Iterable[object]) -> tuple[str, ...]:
    return tuple(str(c) for c in label_space)


def _parse_elements(raw: object, row: int) -> dict[str, int] | None:
    if raw is None:
        return None
    if not isinstance(raw, Mapping):
        raise DatasetError(f"row {row}: elements must be an object")
    out: dict[str, int] = {}
    for k, v in raw.items():
        if isinstance(v, bool):
            v = int(v)
        if v not in (0, 1):
            raise DatasetError(f"row {row}: element {k!r} must be 0/1, got {v!r}")
        out[str(k)] = int(v)
    return out


def _row_to_response(rec: Mapping[str, object], row: int, space: set[str]) -> LabeledResponse:
    for key in ("id", "text", "label"):
        if key not in rec or rec[key] in (None, ""):
            raise DatasetError(f"row {row}: missing field {key!r}")
    label = str(rec["label"])
    if label not in space:
        raise DatasetError(f"row {row}: label {label!r} outside declared label space")
    source = str(rec.get("source") or "original")
    parent = rec.get("parent_id")
    try:
        return LabeledResponse(
            id=str(rec["id"]),
            text=str(rec["text"]),
            label=label,
            elements=_parse_elements(rec.get("elements"), row),
            source=source,
            parent_id=str(parent) if parent not in (None, "") else None,
        )
    except DatasetError as exc:
        raise DatasetError(f"row {row}: {exc}") from exc


def _iter_jsonl(path: Path) -> Iterable[tuple[int, Mapping[str, object]]]:
    with path.open("r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"row {i}: invalid JSON: {exc}") from exc
            if not isinstance(rec, dict):
                raise DatasetError(f"row {i}: expected a JSON object")
            yield i, rec


def _iter_csv(path: Path) -> Iterable[tuple[int, Mapping[str, object]]]:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for key in ("id", "text", "label"):
            if key not in header:
                raise DatasetError(f"CSV header missing column {key!r}")
        element_cols = [c for c in header if c not in ("id", "text", "label", "source", "parent_id")]
        for i, rec in enumerate(reader, start=2):  # row 1 is the header
            elements = {}
            for c in element_cols:
                v = (rec.get(c) or "").strip()
                if v == "":
                    continue
                if v not in ("0", "1"):
                    raise DatasetError(f"row {i}: element column {c!r} must be 0/1, got {v!r}")
                elements[c] = int(v)
            out = {
                "id": rec.get("id"),
                "text": rec.get("text"),
                "label": rec.get("label"),
                "source": rec.get("source") or None,
                "parent_id": rec.get("parent_id") or None,
            }
            if elements:
                out["elements"] = elements
            yield i, out


def load_dataset(
    path: str | Path,
    label_space: Iterable[object],
    format: str = "jsonl",
    task_id: str = "",
) -> Dataset:
    """Parse a JSONL or CSV response file against a declared label space."""
    p = Path(path)
    if not p.exists():
        raise DatasetError(f"no such file: {p}")
    space = _normalize_label_space(label_space)
    space_set = set(space)
    if format == "jsonl":
        rows = _iter_jsonl(p)
    elif format == "csv":
        rows = _iter_csv(p)
    else:
        raise DatasetError(f"unknown format {format!r} (expected jsonl or csv)")

    items: list[LabeledResponse] = []
    seen: dict[str, int] = {}
    try:
        for row, rec in rows:
            resp = _row_to_response(rec, row, space_set)
            if resp.id in seen:
                raise DatasetError(f"row {row}: duplicate id {resp.id!r} (first seen at row {seen[resp.id]})")
            seen[resp.id] = row
            items.append(resp)
    except UnicodeDecodeError as exc:
        raise DatasetError(f"{p}: file is not valid UTF-8: {exc}") from exc
    return Dataset(items=tuple(items), label_space=space, task_id=task_id or p.stem)


def save_jsonl(items: Iterable[LabeledResponse], path: str | Path) -> None:
    """Write responses in the canonical JSONL row schema."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8") as fh:
        for it in items:
            rec: dict[str, object] = {"id": it.id, "text": it.text, "label": it.label}
            if it.elements:
                rec["elements"] = dict(it.elements)
            rec["source"] = it.source
            if it.parent_id is not None:
                rec["parent_id"] = it.parent_id
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def class_histogram(d: Dataset) -> dict[str, int]:
    """Per-class counts; every declared class is present, possibly with 0."""
    hist = {c: 0 for c in d.label_space}
    for it in d.items:
        hist[it.label] += 1
    return hist


def partition(d: Dataset, plan: SplitPlan) -> Splits:
    """Class-balanced validation/test draw; the remainder trains.

    Selection sorts each class's ids by a seeded hash, so the same
    (dataset contents, plan) pair always yields the same splits no matter
    how the input file was ordered.
    """
    by_class: dict[str, list[LabeledResponse]] = {c: [] for c in d.label_space}
    for it in d.items:
        by_class[it.label].append(it)

    need = plan.val_per_class + plan.test_per_class
    val_ids: set[str] = set()
    test_ids: set[str] = set()
    for c in d.label_space:
        members = by_class[c]
        if len(members) < need:
            raise DatasetError(
                f"class {c!r} has {len(members)} items; plan needs {need} (val {plan.val_per_class} + test {plan.test_per_class})"
            )
        ordered = keyed_order(f"partition:{c}", plan.seed, [it.id for it in members])
        val_ids.update(ordered[: plan.val_per_class])
        test_ids.update(ordered[plan.val_per_class : need])

    def subset(pred) -> Dataset:
        return Dataset(
            items=tuple(it for it in d.items if pred(it.id)),
            label_space=d.label_space,
            task_id=d.task_id,
        )

    return Splits(
        train=subset(lambda i: i not in val_ids and i not in test_ids),
        val=subset(lambda i: i in val_ids),
        test=subset(lambda i: i in test_ids),
    )
