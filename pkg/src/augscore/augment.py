"""Augmentation pools, proportion-controlled mixing, and the SMOTE baseline."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import Dataset, LabeledResponse
from .errors import GenerationError, ParseError, PoolError
from .llm_client import Backend, CompletionCache, GenerationRequest, generate, parse_variants
from .prompt import PromptTemplate, render_prompt
from .seeding import keyed_sample, shuffle_key

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AugmentationPool:
    """Generated minority-class responses linked to their parent exemplars."""

    items: tuple[LabeledResponse, ...]
    k_per_exemplar: int
    target_class: str
    template_version: str
    model_name: str = ""
    completeness: float = 1.0
    failures: tuple[str, ...] = ()  # exemplar ids whose generation failed

    def __post_init__(self):
        for it in self.items:
            if it.label != self.target_class:
                raise PoolError(f"pool item {it.id!r} has label {it.label!r}, expected {self.target_class!r}")
            if it.source != "augmented" or not it.parent_id:
                raise PoolError(f"pool item {it.id!r} must be augmented with a parent_id")


@dataclass(frozen=True)
class MixSpec:
    """Fraction of the pool to add and the seed for the draw."""

    proportion: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.proportion <= 1.0:
            raise PoolError(f"proportion must be within [0, 1], got {self.proportion}")


def round_half_away_from_zero(x: float) -> int:
    if x >= 0:
        return math.floor(x + 0.5)
    return math.ceil(x - 0.5)


def select_learn_examples(
    train: Dataset, n: int, seed: int
) -> list[LabeledResponse]:
    """Stratified seeded draw of exemplars from the training split.

    Classes are cycled in label-space order so every class contributes
    roughly equally; within a class the order is a keyed shuffle of ids.
    """
    per_class = {
        c: keyed_sample(
            f"learn:{c}", seed, [it for it in train.items if it.label == c], lambda it: it.id, len(train.items)
        )
        for c in train.label_space
    }
    picked: list[LabeledResponse] = []
    cursor = {c: 0 for c in train.label_space}
    while len(picked) < n:
        progressed = False
        for c in train.label_space:
            if len(picked) >= n:
                break
            if cursor[c] < len(per_class[c]):
                picked.append(per_class[c][cursor[c]])
                cursor[c] += 1
                progressed = True
        if not progressed:
            break
    if not picked:
        raise PoolError("training split has no items to learn from")
    return picked


def build_augment_pool(
    train: Dataset,
    target_class: str,
    template: PromptTemplate,
    backend: Backend,
    k_per_exemplar: int = 4,
    model_name: str = "gpt-4",
    n_learn_examples: int = 5,
    learn_seed: int = 0,
    cache: CompletionCache | None = None,
    completeness_floor: float = 0.9,
    temperature: float = 0.0,
    top_p: float = 0.01,
    max_attempts: int = 5,
) -> AugmentationPool:
    """Generate ``k_per_exemplar`` variants for every minority exemplar.

    A failed exemplar is re-requested once bypassing the cache; if it fails
    again it is recorded and skipped. The pool errors out when completeness
    drops below ``completeness_floor``.
    """
    target_class = str(target_class)
    exemplars = [it for it in train.items if it.label == target_class]
    if not exemplars:
        raise PoolError(f"training set has no items of target class {target_class!r}")
    learn = select_learn_examples(train, n_learn_examples, learn_seed)

    items: list[LabeledResponse] = []
    failures: list[str] = []
    for ex in exemplars:
        prompt = render_prompt(template, ex, learn, k_per_exemplar)
        req = GenerationRequest(
            prompt=prompt,
            n_variants=k_per_exemplar,
            model_name=model_name,
            temperature=temperature,
            top_p=top_p,
            max_attempts=max_attempts,
        )
        variants = None
        for refresh in (False, True):  # second pass skips the cache on purpose
            try:
                completion = generate(req, backend, cache, refresh=refresh)
                variants = parse_variants(completion, k_per_exemplar)
                break
            except (ParseError, GenerationError) as exc:
                logger.warning("generation for exemplar %s failed (%s)", ex.id, exc)
        if variants is None:
            failures.append(ex.id)
            continue
        for i, text in enumerate(variants, start=1):
            items.append(
                LabeledResponse(
                    id=f"{ex.id}::aug{i}",
                    text=text,
                    label=target_class,
                    source="augmented",
                    parent_id=ex.id,
                )
            )

    completeness = (len(exemplars) - len(failures)) / len(exemplars)
    if completeness < completeness_floor:
        raise PoolError(
            f"pool completeness {completeness:.3f} below floor {completeness_floor} "
            f"({len(failures)} of {len(exemplars)} exemplars failed)"
        )
    return AugmentationPool(
        items=tuple(items),
        k_per_exemplar=k_per_exemplar,
        target_class=target_class,
        template_version=template.version,
        model_name=model_name,
        completeness=completeness,
        failures=tuple(failures),
    )


def mix_count(proportion: float, pool_size: int) -> int:
    return round_half_away_from_zero(proportion * pool_size)


def mix_training_set(
    train: Dataset,
    pool: AugmentationPool | Sequence[LabeledResponse],
    spec: MixSpec,
) -> Dataset:
    """Append a seeded uniform draw of ``proportion * |pool|`` pool items.

    One keyed shuffle per (pool, seed) and a prefix take, so the selection at
    a lower proportion is always a subset of the selection at a higher one.
    Original items keep their order; selected items are appended in shuffle
    order.
    """
    pool_items = tuple(pool.items) if isinstance(pool, AugmentationPool) else tuple(pool)
    space = set(train.label_space)
    for it in pool_items:
        if it.label not in space:
            raise PoolError(f"pool item {it.id!r} label {it.label!r} outside training label space")
    n_add = mix_count(spec.proportion, len(pool_items))
    if n_add == 0:
        return Dataset(items=train.items, label_space=train.label_space, task_id=train.task_id)
    ordered = sorted(pool_items, key=lambda it: shuffle_key("mix", spec.seed, it.id))
    return Dataset(
        items=train.items + tuple(ordered[:n_add]),
        label_space=train.label_space,
        task_id=train.task_id,
    )


def smote_interpolate(x: np.ndarray, neighbor: np.ndarray, lam: float) -> np.ndarray:
    """The SMOTE synthesis step: x plus lam times the gap to the neighbor."""
    return x + lam * (neighbor - x)


def smote_oversample(
    points: np.ndarray,
    labels: Sequence[str],
    minority_class: str,
    k_neighbors: int,
    n_new: int,
    seed: int,
) -> np.ndarray:
    """Feature-space minority oversampling.

    Each synthetic point interpolates between a seeded-random minority sample
    and a uniform choice among its k nearest minority neighbors (Euclidean),
    with the interpolation factor drawn uniform on [0, 1).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise PoolError(f"points must be a 2-D array, got shape {pts.shape}")
    if n_new < 0:
        raise PoolError("n_new must be non-negative")
    if k_neighbors < 1:
        raise PoolError("k_neighbors must be at least 1")
    labels = [str(l) for l in labels]
    if len(labels) != len(pts):
        raise PoolError(f"dimension mismatch: {len(pts)} points vs {len(labels)} labels")
    minority = pts[np.array([l == str(minority_class) for l in labels], dtype=bool)]
    if len(minority) <= k_neighbors:
        raise PoolError(
            f"minority class {minority_class!r} has {len(minority)} points; "
            f"needs more than k_neighbors={k_neighbors}"
        )
    if n_new == 0:
        return np.empty((0, pts.shape[1]))

    # All-pairs distances once; the minority set is small by definition.
    diff = minority[:, None, :] - minority[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    nn_idx = np.argsort(dist, axis=1, kind="stable")[:, :k_neighbors]

    rng = np.random.default_rng(seed)
    out = np.empty((n_new, pts.shape[1]))
    for i in range(n_new):
        base = int(rng.integers(len(minority)))
        pick = int(rng.integers(k_neighbors))
        lam = float(rng.random())
        out[i] = smote_interpolate(minority[base], minority[nn_idx[base, pick]], lam)
    return out
