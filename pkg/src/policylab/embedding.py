"""Word vectors and Word Mover's Distance.

Sentence bags are tiny (a handful of content tokens), so the earth-mover
distance is solved exactly as a transportation LP rather than with any
relaxed lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from collections import Counter
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from .text import content_tokens


class OutOfVocabularyError(ValueError):
    """Sentence has no in-vocabulary content tokens."""


class VectorFileError(ValueError):
    """Malformed word-vector file."""


@dataclass(frozen=True)
class WordVectorTable:
    dimension: int
    vectors: dict[str, np.ndarray]

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass(frozen=True)
class WmdStats:
    mean: float
    std: float
    threshold: float
    alpha: float


def load_vectors(path: str | Path) -> WordVectorTable:
    """Parse a GloVe-style text file: token followed by d reals per line."""
    vectors: dict[str, np.ndarray] = {}
    dimension: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if dimension is None:
                dimension = len(values)
                if dimension == 0:
                    raise VectorFileError(f"{path}:{lineno}: no vector components")
            elif len(values) != dimension:
                raise VectorFileError(
                    f"{path}:{lineno}: expected {dimension} components, got {len(values)}"
                )
            vectors[token] = np.array([float(v) for v in values], dtype=np.float64)
    if not vectors:
        raise VectorFileError(f"{path}: empty vector file")
    assert dimension is not None
    return WordVectorTable(dimension=dimension, vectors=vectors)


def _bag(text: str, table: WordVectorTable) -> tuple[list[str], np.ndarray]:
    counts = Counter(t for t in content_tokens(text) if t in table.vectors)
    if not counts:
        raise OutOfVocabularyError(f"no in-vocabulary tokens in {text!r}")
    tokens = sorted(counts)
    weights = np.array([counts[t] for t in tokens], dtype=np.float64)
    return tokens, weights / weights.sum()


def solve_transport(cost: np.ndarray, supply: np.ndarray, demand: np.ndarray) -> float:
    """Exact minimum-cost transportation via LP (HiGHS)."""
    m, n = cost.shape
    a_eq = np.zeros((m + n, m * n))
    for i in range(m):
        a_eq[i, i * n : (i + 1) * n] = 1.0
    for j in range(n):
        a_eq[m + j, j::n] = 1.0
    b_eq = np.concatenate([supply, demand])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return max(float(res.fun), 0.0)


def wmd_texts(a: str, b: str, table: WordVectorTable) -> float:
    """Word Mover's Distance between two texts.

    Euclidean ground cost between word vectors over normalized bag-of-words
    distributions; raises OutOfVocabularyError when either side has no
    usable tokens.
    """
    toks_a, w_a = _bag(a, table)
    toks_b, w_b = _bag(b, table)
    if toks_a == toks_b and np.array_equal(w_a, w_b):
        return 0.0
    va = np.stack([table.vectors[t] for t in toks_a])
    vb = np.stack([table.vectors[t] for t in toks_b])
    diff = va[:, None, :] - vb[None, :, :]
    cost = np.sqrt((diff * diff).sum(axis=2))
    return solve_transport(cost, w_a, w_b)


def wmd(a, b, table: WordVectorTable) -> float:
    """WMD between two sentences (or plain strings)."""
    ta = a if isinstance(a, str) else a.text
    tb = b if isinstance(b, str) else b.text
    return wmd_texts(ta, tb, table)


def document_wmd_stats(
    policy, table: WordVectorTable, alpha: float = 0.5, all_pairs: bool = False
) -> WmdStats:
    """Distance statistics over a policy's sentences.

    Defaults to adjacent pairs (the quantity that gates adjacent-sentence
    merging); set ``all_pairs`` for the O(n^2) variant. Threshold is
    mean - alpha * std, clamped at zero.
    """
    usable = []
    for s in policy.sentences:
        try:
            _bag(s.text, table)
        except OutOfVocabularyError:
            continue
        usable.append(s)
    if len(usable) < 2:
        raise ValueError(f"degenerate document {policy.doc_id!r}: <2 usable sentences")

    if all_pairs:
        pairs = [(i, j) for i in range(len(usable)) for j in range(i + 1, len(usable))]
    else:
        pairs = [(i, i + 1) for i in range(len(usable) - 1)]
    dists = np.array([wmd(usable[i], usable[j], table) for i, j in pairs])
    mean = float(dists.mean())
    std = float(dists.std())
    return WmdStats(mean=mean, std=std, threshold=max(0.0, mean - alpha * std), alpha=alpha)
