"""Trainable probabilistic text classifier.

A hashed n-gram + mean-word-vector representation feeding multinomial
logistic regression. The same class serves as the binary relevance model
and the 5-class action-mode model; anything implementing ``predict_proba``
over texts can stand in for it.
"""

from __future__ import annotations

import json
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from . import kernels
from .embedding import WordVectorTable
from .text import tokenize

DEFAULT_HASH_DIM = 2**18


@dataclass(frozen=True)
class FeatureVector:
    indices: np.ndarray  # int64, sorted, unique
    values: np.ndarray  # float64
    dim: int


class Featurizer:
    """Deterministic text -> sparse feature mapping.

    Hashed unigrams and bigrams (count mass normalized by token count) plus
    the mean word vector of the text appended after the hashed block.
    """

    def __init__(
        self,
        hash_dim: int = DEFAULT_HASH_DIM,
        table: Optional[WordVectorTable] = None,
        use_bigrams: bool = True,
    ):
        self.hash_dim = hash_dim
        self.table = table
        self.use_bigrams = use_bigrams
        self.dim = hash_dim + (table.dimension if table is not None else 0)

    def _hash(self, key: str) -> int:
        return zlib.crc32(key.encode("utf-8")) % self.hash_dim

    def featurize(self, text: str) -> FeatureVector:
        tokens = tokenize(text)
        acc: dict[int, float] = {}
        if tokens:
            w = 1.0 / len(tokens)
            for t in tokens:
                idx = self._hash("1:" + t)
                acc[idx] = acc.get(idx, 0.0) + w
            if self.use_bigrams:
                for a, b in zip(tokens, tokens[1:]):
                    idx = self._hash(f"2:{a}_{b}")
                    acc[idx] = acc.get(idx, 0.0) + w
        if self.table is not None and tokens:
            vecs = [self.table.vectors[t] for t in tokens if t in self.table.vectors]
            if vecs:
                mean = np.mean(vecs, axis=0)
                for i, v in enumerate(mean):
                    if v != 0.0:
                        acc[self.hash_dim + i] = float(v)
        if not acc:
            return FeatureVector(
                np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64), self.dim
            )
        idx = np.array(sorted(acc), dtype=np.int64)
        vals = np.array([acc[i] for i in idx], dtype=np.float64)
        return FeatureVector(idx, vals, self.dim)

    def to_csr(self, texts: Sequence[str]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        indptr = np.zeros(len(texts) + 1, dtype=np.int64)
        all_idx: list[np.ndarray] = []
        all_val: list[np.ndarray] = []
        for i, text in enumerate(texts):
            fv = self.featurize(text)
            all_idx.append(fv.indices)
            all_val.append(fv.values)
            indptr[i + 1] = indptr[i] + fv.indices.shape[0]
        indices = np.concatenate(all_idx) if all_idx else np.empty(0, dtype=np.int64)
        values = np.concatenate(all_val) if all_val else np.empty(0, dtype=np.float64)
        return indptr, indices.astype(np.int64), values.astype(np.float64)


@dataclass
class TrainConfig:
    epochs: int = 48
    batch_size: int = 32
    learning_rate: float = 0.1
    l2: float = 1e-4
    seed: int = 0


@dataclass
class EvalMetrics:
    accuracy: float
    per_class_f1: list[float]
    weighted_f1: float
    balanced_f1: float


class TextModel(Protocol):
    def predict_proba(self, texts: Sequence[str]) -> np.ndarray: ...


class TrainingDivergedError(RuntimeError):
    pass


class TextClassifier:
    """Multinomial logistic regression over hashed text features."""

    def __init__(self, class_count: int, featurizer: Featurizer):
        self.class_count = class_count
        self.featurizer = featurizer
        # stored transposed (feature_dim, class_count) for the kernels
        self.wt = np.zeros((featurizer.dim, class_count), dtype=np.float64)
        self.train_log: list[float] = []

    @property
    def weights(self) -> np.ndarray:
        """Dense class_count x feature_dim view."""
        return self.wt.T

    def fit(self, dataset: Sequence[tuple[str, int]], config: TrainConfig = TrainConfig()):
        return self._run_epochs(dataset, config, config.epochs)

    def partial_fit(
        self, dataset: Sequence[tuple[str, int]], epochs: int = 4,
        config: TrainConfig = TrainConfig(),
    ):
        """Continue gradient descent from the current weights."""
        return self._run_epochs(dataset, config, epochs)

    def _run_epochs(self, dataset, config: TrainConfig, epochs: int):
        if not dataset:
            raise ValueError("empty dataset")
        labels = np.array([y for _, y in dataset], dtype=np.int64)
        if labels.max(initial=0) >= self.class_count or labels.min(initial=0) < 0:
            raise ValueError("label outside class range")
        if np.unique(labels).shape[0] == 1:
            warnings.warn("single-class dataset: training is degenerate", stacklevel=2)
        texts = [t for t, _ in dataset]
        indptr, indices, values = self.featurizer.to_csr(texts)
        rng = np.random.default_rng(config.seed)
        for _ in range(epochs):
            order = rng.permutation(labels.shape[0]).astype(np.int64)
            loss = kernels.sgd_epoch(
                self.wt, indptr, indices, values, labels, order,
                config.learning_rate, config.l2, config.batch_size,
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss {loss}")
            self.train_log.append(float(loss))
        return self

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        indptr, indices, values = self.featurizer.to_csr(texts)
        logits = kernels.predict_logits(self.wt, indptr, indices, values)
        logits = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        return probs

    def predict(self, texts: Sequence[str]) -> np.ndarray:
        return self.predict_proba(texts).argmax(axis=1)

    # ------------------------------------------------------- checkpointing

    CHECKPOINT_VERSION = 1

    def save(self, path: str | Path) -> None:
        meta = {
            "version": self.CHECKPOINT_VERSION,
            "class_count": self.class_count,
            "hash_dim": self.featurizer.hash_dim,
            "use_bigrams": self.featurizer.use_bigrams,
            "has_table": self.featurizer.table is not None,
            "train_log": self.train_log,
        }
        np.savez_compressed(path, wt=self.wt, meta=json.dumps(meta))

    @classmethod
    def load(cls, path: str | Path, table: Optional[WordVectorTable] = None) -> "TextClassifier":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            wt = data["wt"]
        if meta["version"] != cls.CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        if meta["has_table"] and table is None:
            raise ValueError("checkpoint was trained with word vectors; pass the table")
        featurizer = Featurizer(
            hash_dim=meta["hash_dim"],
            table=table if meta["has_table"] else None,
            use_bigrams=meta["use_bigrams"],
        )
        model = cls(meta["class_count"], featurizer)
        model.wt = wt
        model.train_log = list(meta["train_log"])
        return model


def cross_entropy_loss_grad(
    weights: np.ndarray, x: np.ndarray, y: np.ndarray, l2: float = 0.0
) -> tuple[float, np.ndarray]:
    """Full-batch loss and analytic gradient on dense inputs.

    loss = mean cross-entropy + 0.5 * l2 * ||W||^2; used for gradient
    verification against finite differences.
    """
    logits = x @ weights.T
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    n = x.shape[0]
    loss = -np.log(np.maximum(probs[np.arange(n), y], 1e-300)).mean()
    loss += 0.5 * l2 * float((weights * weights).sum())
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    grad = delta.T @ x / n + l2 * weights
    return float(loss), grad


def evaluate(model: TextModel, testset: Sequence[tuple[str, int]], class_count: int) -> EvalMetrics:
    """Confusion-matrix metrics.

    F1 of a class absent from both truth and predictions is 0 and carries
    zero weight in weighted_f1; balanced_f1 is the unweighted mean of all
    per-class F1 values.
    """
    if not testset:
        raise ValueError("empty test set")
    texts = [t for t, _ in testset]
    truth = np.array([y for _, y in testset], dtype=np.int64)
    pred = np.asarray(model.predict_proba(texts)).argmax(axis=1)
    accuracy = float((pred == truth).mean())
    per_class_f1: list[float] = []
    weights: list[float] = []
    for c in range(class_count):
        tp = int(((pred == c) & (truth == c)).sum())
        fp = int(((pred == c) & (truth != c)).sum())
        fn = int(((pred != c) & (truth == c)).sum())
        if tp + fp + fn == 0:
            per_class_f1.append(0.0)
            weights.append(0.0)
        else:
            per_class_f1.append(2 * tp / (2 * tp + fp + fn))
            weights.append(float((truth == c).sum()))
    wsum = sum(weights)
    weighted = (
        sum(f * w for f, w in zip(per_class_f1, weights)) / wsum if wsum > 0 else 0.0
    )
    balanced = sum(per_class_f1) / class_count
    return EvalMetrics(
        accuracy=accuracy,
        per_class_f1=per_class_f1,
        weighted_f1=float(weighted),
        balanced_f1=float(balanced),
    )


def load_jsonl_dataset(path: str | Path) -> list[tuple[str, int]]:
    """Dataset interchange: JSON Lines of {text, class}."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append((rec["text"], int(rec["class"])))
    return out
