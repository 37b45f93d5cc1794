"""Deterministic synthetic corpora shaped like the study's response data.

One majority class of short free-text answers, one underrepresented minority
class whose items carry a sparse content-token signal diluted by shared
vocabulary, plus a pool of extra authentic-style minority responses for the
gold-standard arm. Everything derives from one seed via ``random.Random``
calls to ``random()`` only, so corpora are stable across platforms.
"""
from __future__ import annotations

import json
import random
from pathlib import Path
from typing import Sequence

from .dataset import Dataset, LabeledResponse, save_jsonl
from .prompt import DEFAULT_GROUP_MAP, GroupingRule, PromptTemplate, template_to_dict

SHARED_WORDS = (
    "the", "a", "is", "are", "and", "of", "to", "in", "it", "that", "they",
    "look", "at", "table", "because", "answer", "would", "could", "be",
    "think", "know", "tell", "find", "out", "also", "was", "were", "has",
    "have", "with",
)

MAJORITY_WORDS = (
    "different", "not", "cannot", "numbers", "unequal", "milk", "sugarcane",
    "melting", "point", "density", "higher", "lower", "thicker", "changes",
    "varies", "separate", "distinct", "unlike", "other", "none", "no",
    "disagree", "wrong", "differ", "apart",
)

MINORITY_WORDS = (
    "honey", "apple", "same", "similar", "match", "matching", "solubility",
    "soluble", "water", "dissolve", "properties", "pattern", "evidence",
    "equal", "close", "alike", "identical", "both", "substance", "sugar",
    "measurement", "error", "almost", "overlap",
)


def _pick(rng: random.Random, pool: Sequence[str]) -> str:
    return pool[int(rng.random() * len(pool)) % len(pool)]


def _majority_text(rng: random.Random) -> str:
    length = 8 + int(rng.random() * 7)
    words = []
    for _ in range(length):
        pool = MAJORITY_WORDS if rng.random() < 0.35 else SHARED_WORDS
        words.append(_pick(rng, pool))
    return " ".join(words)


def _minority_text(rng: random.Random) -> str:
    length = 8 + int(rng.random() * 7)
    words = []
    n_signal = 0
    for _ in range(length):
        r = rng.random()
        if r < 0.18:
            words.append(_pick(rng, MINORITY_WORDS))
            n_signal += 1
        elif r < 0.40:
            words.append(_pick(rng, MAJORITY_WORDS))
        else:
            words.append(_pick(rng, SHARED_WORDS))
    if n_signal == 0:
        words.append(_pick(rng, MINORITY_WORDS))
    return " ".join(words)


def make_imbalanced_dataset(
    n_majority: int = 193,
    n_minority: int = 73,
    seed: int = 7,
    task_id: str = "synthetic-sugar",
) -> Dataset:
    """Two-class dataset mirroring the 193/73 shape of the study's first task."""
    rng = random.Random(seed)
    items: list[LabeledResponse] = []
    for i in range(n_majority):
        items.append(LabeledResponse(id=f"maj-{i:04d}", text=_majority_text(rng), label="0"))
    for i in range(n_minority):
        items.append(LabeledResponse(id=f"min-{i:04d}", text=_minority_text(rng), label="1"))
    return Dataset(items=tuple(items), label_space=("0", "1"), task_id=task_id)


def make_gold_pool(n: int = 160, seed: int = 11) -> list[LabeledResponse]:
    """Extra authentic-style minority responses for the gold-standard arm."""
    rng = random.Random(seed)
    return [
        LabeledResponse(
            id=f"gold-{i:04d}", text=_minority_text(rng), label="1", source="gold_standard"
        )
        for i in range(n)
    ]


def binary_template(version: str = "fixture-1") -> PromptTemplate:
    """A fully specified binary-task template for the synthetic sugar item."""
    sections = {
        "ROLE": (
            "You are a data augmenting machine that mimics middle school students' "
            "answers to a science item. You will use language that middle school "
            "students are likely to use."
        ),
        "TASK": (
            "You will augment a student answer to the science item given in the "
            'ITEM STATEMENT. You will generate {{n_variants}} student answers for the example '
            "I will give to you, referring to STUDENT RESPONSE CHARACTERISTICS. Your "
            "answers should be similar to the EXAMPLE TO AUGMENT, but linguistically "
            'diverse, and also be under group "{{target_group}}" according to the '
            "SCORING RUBRIC and EXAMPLES TO LEARN. When you finish thinking, first "
            "explain why each of your augmented answers is under group "
            '"{{target_group}}", then provide the augmented responses.'
        ),
        "ITEM_STATEMENT": (
            "Amy wants to know if the sugar found in honey, milk, sugarcane, and "
            "apples is the same. She removed the sugar from each food and recorded "
            "its density, solubility in water, and melting point in a table. Decide "
            "whether any of the foods contain the same sugar and explain your answer "
            "using the data."
        ),
        "SCORING_RUBRIC": (
            "E1: The student clearly indicates that the sugar from the apple and "
            "honey could be the same substance. Score 1 when the expectation is met, "
            "0 otherwise."
        ),
        "EXAMPLES_TO_LEARN": "{{examples_to_learn}}",
        "RESPONSE_CHARACTERISTICS": (
            "Responses are one to five short sentences, ranging from informal "
            "conversational wording to basic science vocabulary such as density, "
            "solubility, and melting point. Misspellings occur and are kept as they are."
        ),
        "EXAMPLE_TO_AUGMENT": "{{exemplar}}",
    }
    return PromptTemplate(sections=sections, target_group="1", version=version)


def quadruple_template(version: str = "fixture-q1") -> PromptTemplate:
    """A four-group template with the OR/OR grouping rule over seven elements."""
    base = binary_template(version=version)
    sections = dict(base.sections)
    sections["SCORING_RUBRIC"] = (
        "The rubric has two dimensions. Disciplinary Core Ideas: E1, E5, E6, E7. "
        "Science and Engineering Practices combined with Crosscutting Concepts: "
        "E2, E3, E4. Each element is scored on a binary scale: 1 when the "
        "expectation is met, 0 otherwise."
    )
    sections["GROUPING_RULES"] = (
        "Let DCI_OR = 1 if at least one DCI element (E1, E5, E6, or E7) is "
        "satisfied, and 0 otherwise. Let SEP+CCC_OR = 1 if at least one SEP+CCC "
        "element (E2, E3, or E4) is satisfied, and 0 otherwise. GROUP = A if "
        "DCI_OR = SEP+CCC_OR = 0, GROUP = B if DCI_OR = 1 and SEP+CCC_OR = 0, "
        "GROUP = C if DCI_OR = 0 and SEP+CCC_OR = 1, and GROUP = D if "
        "DCI_OR = 1 and SEP+CCC_OR = 1. Return GROUP."
    )
    rule = GroupingRule(
        dci_elements=frozenset({"E1", "E5", "E6", "E7"}),
        sepccc_elements=frozenset({"E2", "E3", "E4"}),
        group_map=dict(DEFAULT_GROUP_MAP),
    )
    return PromptTemplate(
        sections=sections, target_group="B", version=version, grouping_rule=rule
    )


def write_fixture_bundle(
    out_dir: str | Path,
    seed: int = 7,
    base_seed: int = 42,
    repetitions: int = 5,
    arms: Sequence[str] = ("llm_augment", "gold_standard"),
    grid: Sequence[float] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0),
) -> dict[str, Path]:
    """Write the synthetic dataset, gold pool, template, and a mock sweep
    config into ``out_dir``; returns the paths keyed by role."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "dataset": out / "dataset.jsonl",
        "gold": out / "gold.jsonl",
        "template": out / "template.json",
        "quadruple_template": out / "template_quadruple.json",
        "config": out / "sweep_config.json",
    }
    save_jsonl(make_imbalanced_dataset(seed=seed).items, paths["dataset"])
    save_jsonl(make_gold_pool(seed=seed + 4), paths["gold"])
    paths["template"].write_text(
        json.dumps(template_to_dict(binary_template()), indent=2) + "\n", encoding="utf-8"
    )
    paths["quadruple_template"].write_text(
        json.dumps(template_to_dict(quadruple_template()), indent=2) + "\n", encoding="utf-8"
    )
    config = {
        "task_id": "synthetic-sugar",
        "dataset": str(paths["dataset"]),
        "format": "jsonl",
        "label_space": ["0", "1"],
        "target_class": "1",
        "split": {"val_per_class": 13, "test_per_class": 30},
        "grid": list(grid),
        "repetitions": repetitions,
        "arms": list(arms),
        "gold_pool": str(paths["gold"]),
        "template": str(paths["template"]),
        "k_per_exemplar": 4,
        "base_seed": base_seed,
        "backend": "mock",
        "model_name": "mock-model",
        "train": {"learning_rate": 0.5, "epochs": 400, "l2": 1e-4, "snapshot_interval": 50},
        "featurizer": {"min_doc_freq": 1},
        "positive_class": "1",
        "output_dir": str(out / "results"),
    }
    paths["config"].write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return paths
