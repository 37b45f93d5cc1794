"""Reference scoring model: IDF-weighted token counts into softmax regression.

The objective is convex, so full-batch gradient descent from zero
initialization is deterministic and needs no stochastic machinery:

    loss(W, b) = mean cross-entropy of softmax(W x + b) + (l2/2) * ||W||^2

Validation macro-F1 is sampled every ``snapshot_interval`` epochs and the
best snapshot is returned. Anything that maps texts to per-class probability
rows summing to 1 can stand in for this model; the sweep layer depends only
on that contract.
"""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import ClassifierError
from .metrics import compute_metrics, confusion_matrix

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric runs; misspellings pass through untouched."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True, eq=False)
class Featurizer:
    vocabulary: dict[str, int]  # token -> dense index, lexicographic
    idf: np.ndarray
    min_doc_freq: int

    @property
    def size(self) -> int:
        return len(self.vocabulary)


def featurize_fit(corpus: Sequence[str], min_doc_freq: int = 1) -> Featurizer:
    """Vocabulary of tokens with document frequency >= min_doc_freq.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1
    """
    if not corpus:
        raise ClassifierError("cannot fit a featurizer on an empty corpus")
    df: Counter[str] = Counter()
    for doc in corpus:
        df.update(set(tokenize(doc)))
    kept = sorted(t for t, n in df.items() if n >= min_doc_freq)
    if not kept:
        raise ClassifierError(f"vocabulary empty after min_doc_freq={min_doc_freq} filtering")
    n_docs = len(corpus)
    idf = np.array([math.log((1 + n_docs) / (1 + df[t])) + 1.0 for t in kept])
    return Featurizer(vocabulary={t: i for i, t in enumerate(kept)}, idf=idf, min_doc_freq=min_doc_freq)


def featurize_apply(f: Featurizer, text: str) -> np.ndarray:
    """L2-normalized count*idf vector; all-unknown text maps to zeros."""
    vec = np.zeros(f.size)
    for tok, count in Counter(tokenize(text)).items():
        idx = f.vocabulary.get(tok)
        if idx is not None:
            vec[idx] = count * f.idf[idx]
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def featurize_matrix(f: Featurizer, texts: Sequence[str]) -> np.ndarray:
    return np.vstack([featurize_apply(f, t) for t in texts]) if texts else np.zeros((0, f.size))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 500
    l2: float = 1e-4
    snapshot_interval: int = 50


@dataclass(frozen=True, eq=False)
class ClassifierModel:
    weights: np.ndarray  # (C, V)
    bias: np.ndarray  # (C,)
    label_space: tuple[str, ...]
    train_config: TrainConfig
    history: tuple[tuple[int, float], ...] = ()  # (epoch, validation macro-F1)
    loss_trace: tuple[float, ...] = ()


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def regularized_loss(X: np.ndarray, y_idx: np.ndarray, W: np.ndarray, b: np.ndarray, l2: float) -> float:
    with np.errstate(divide="ignore"):
        p = softmax(X @ W.T + b)
        ce = -np.mean(np.log(p[np.arange(len(y_idx)), y_idx]))
    return float(ce + 0.5 * l2 * np.sum(W * W))


def loss_and_grads(
    X: np.ndarray, y_idx: np.ndarray, W: np.ndarray, b: np.ndarray, l2: float
) -> tuple[float, np.ndarray, np.ndarray]:
    n = len(y_idx)
    p = softmax(X @ W.T + b)
    with np.errstate(divide="ignore"):
        loss = float(-np.mean(np.log(p[np.arange(n), y_idx])) + 0.5 * l2 * np.sum(W * W))
    g = p.copy()
    g[np.arange(n), y_idx] -= 1.0
    g /= n
    grad_w = g.T @ X + l2 * W
    grad_b = g.sum(axis=0)
    return loss, grad_w, grad_b


def _predict_indices(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    # argmax takes the first maximum, i.e. ties break toward the lowest index
    return np.argmax(X @ W.T + b, axis=1)


def train_classifier(
    features: np.ndarray,
    labels: Sequence[str],
    val_features: np.ndarray | None,
    val_labels: Sequence[str] | None,
    config: TrainConfig = TrainConfig(),
    label_space: Sequence[str] | None = None,
) -> ClassifierModel:
    """Full-batch gradient descent from zeros; returns the best-validation snapshot."""
    X = np.asarray(features, dtype=float)
    labels = [str(l) for l in labels]
    if X.ndim != 2 or len(X) != len(labels):
        raise ClassifierError(f"features/labels mismatch: {X.shape} vs {len(labels)} labels")
    space = tuple(str(c) for c in label_space) if label_space is not None else tuple(sorted(set(labels)))
    index = {c: i for i, c in enumerate(space)}
    unknown = [l for l in labels if l not in index]
    if unknown:
        raise ClassifierError(f"labels outside label space: {sorted(set(unknown))}")
    if len(set(labels)) < 2:
        raise ClassifierError("training data contains a single class")
    y = np.array([index[l] for l in labels])

    has_val = val_features is not None and val_labels is not None and len(val_labels) > 0
    if has_val:
        Xv = np.asarray(val_features, dtype=float)
        yv = [str(l) for l in val_labels]

    C, V = len(space), X.shape[1]
    W = np.zeros((C, V))
    b = np.zeros(C)
    best: tuple[float, int, np.ndarray, np.ndarray] | None = None
    history: list[tuple[int, float]] = []
    losses: list[float] = []

    def val_f1() -> float:
        preds = [space[i] for i in _predict_indices(Xv, W, b)]
        return compute_metrics(confusion_matrix(yv, preds, space)).f1

    for epoch in range(1, config.epochs + 1):
        loss, grad_w, grad_b = loss_and_grads(X, y, W, b, config.l2)
        if not math.isfinite(loss):
            raise ClassifierError(
                f"non-finite loss at epoch {epoch}; the learning rate is too large"
            )
        losses.append(loss)
        W -= config.learning_rate * grad_w
        b -= config.learning_rate * grad_b
        if has_val and (epoch % config.snapshot_interval == 0 or epoch == config.epochs):
            f1 = val_f1()
            history.append((epoch, f1))
            if best is None or f1 > best[0]:
                best = (f1, epoch, W.copy(), b.copy())

    if best is not None:
        W, b = best[2], best[3]
    return ClassifierModel(
        weights=W,
        bias=b,
        label_space=space,
        train_config=config,
        history=tuple(history),
        loss_trace=tuple(losses),
    )


def predict(
    model: ClassifierModel, featurizer: Featurizer, texts: Sequence[str]
) -> tuple[list[str], np.ndarray]:
    """(labels, per-class probability rows); ties go to the lowest-indexed class."""
    X = featurize_matrix(featurizer, texts)
    probs = softmax(X @ model.weights.T + model.bias)
    idx = np.argmax(probs, axis=1)
    return [model.label_space[i] for i in idx], probs


class Scorer(Protocol):
    """Adapter contract the sweep layer depends on."""

    label_space: tuple[str, ...]

    def predict(self, texts: Sequence[str]) -> tuple[list[str], np.ndarray]: ...


@dataclass(frozen=True, eq=False)
class TextClassifier:
    """Featurizer plus trained model, satisfying the Scorer contract."""

    featurizer: Featurizer
    model: ClassifierModel

    @property
    def label_space(self) -> tuple[str, ...]:
        return self.model.label_space

    def predict(self, texts: Sequence[str]) -> tuple[list[str], np.ndarray]:
        return predict(self.model, self.featurizer, texts)


def fit_text_classifier(
    train_texts: Sequence[str],
    train_labels: Sequence[str],
    val_texts: Sequence[str] | None,
    val_labels: Sequence[str] | None,
    label_space: Sequence[str],
    config: TrainConfig = TrainConfig(),
    min_doc_freq: int = 1,
) -> TextClassifier:
    featurizer = featurize_fit(list(train_texts), min_doc_freq)
    X = featurize_matrix(featurizer, train_texts)
    Xv = featurize_matrix(featurizer, val_texts) if val_texts else None
    model = train_classifier(X, train_labels, Xv, val_labels, config, label_space)
    return TextClassifier(featurizer=featurizer, model=model)


def model_to_json(clf: TextClassifier) -> str:
    """Single JSON document holding the featurizer and the weights."""
    ordered = sorted(clf.featurizer.vocabulary, key=clf.featurizer.vocabulary.get)
    doc = {
        "vocabulary": ordered,
        "idf": [float(v) for v in clf.featurizer.idf],
        "weights": [[float(v) for v in row] for row in clf.model.weights],
        "bias": [float(v) for v in clf.model.bias],
        "label_space": list(clf.model.label_space),
        "train_config": asdict(clf.model.train_config),
        "featurizer_params": {"min_doc_freq": clf.featurizer.min_doc_freq},
    }
    return json.dumps(doc, ensure_ascii=False, indent=2)


def save_model(path: str | Path, clf: TextClassifier) -> None:
    Path(path).write_text(model_to_json(clf), encoding="utf-8")


def load_model(path: str | Path) -> TextClassifier:
    p = Path(path)
    if not p.exists():
        raise ClassifierError(f"no such model file: {p}")
    doc = json.loads(p.read_text(encoding="utf-8"))
    featurizer = Featurizer(
        vocabulary={t: i for i, t in enumerate(doc["vocabulary"])},
        idf=np.array(doc["idf"], dtype=float),
        min_doc_freq=int(doc["featurizer_params"]["min_doc_freq"]),
    )
    model = ClassifierModel(
        weights=np.array(doc["weights"], dtype=float),
        bias=np.array(doc["bias"], dtype=float),
        label_space=tuple(doc["label_space"]),
        train_config=TrainConfig(**doc["train_config"]),
    )
    if model.weights.shape != (len(model.label_space), featurizer.size):
        raise ClassifierError("model weights do not match the featurizer and label space")
    return TextClassifier(featurizer=featurizer, model=model)
