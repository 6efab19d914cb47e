"""Hot training/prediction kernels with a numba fast path.

The numba path is the default; set POLICYLAB_NO_NUMBA=1 to force the pure
numpy implementations (same semantics, useful on platforms without a JIT
and for benchmarking). Both paths operate on CSR-style sparse batches and
a transposed weight matrix of shape (feature_dim, class_count).
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("POLICYLAB_NO_NUMBA", "").lower() in ("1", "true", "yes")

try:  # pragma: no cover - exercised via the env flag in CI
    if _DISABLE:
        raise ImportError("numba disabled by POLICYLAB_NO_NUMBA")
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


def backend() -> str:
    return "numba" if _HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------- numpy ----


def predict_logits_numpy(wt, indptr, indices, values):
    n = indptr.shape[0] - 1
    c = wt.shape[1]
    logits = np.zeros((n, c), dtype=np.float64)
    lens = np.diff(indptr)
    if lens.sum() == 0:
        return logits
    rows = np.repeat(np.arange(n), lens)
    np.add.at(logits, rows, wt[indices] * values[:, None])
    return logits


def sgd_epoch_numpy(wt, indptr, indices, values, labels, order, lr, l2, batch_size):
    """One epoch of mini-batch softmax regression; returns mean sample loss.

    Per batch: multiplicative L2 decay of all weights, then a gradient step
    computed from the pre-step weights for the whole batch.
    """
    n = labels.shape[0]
    c = wt.shape[1]
    total = 0.0
    for bstart in range(0, n, batch_size):
        batch = order[bstart : bstart + batch_size]
        b = batch.shape[0]
        if l2 > 0.0:
            wt *= 1.0 - lr * l2
        lens = indptr[batch + 1] - indptr[batch]
        nz = np.concatenate(
            [np.arange(indptr[i], indptr[i + 1]) for i in batch]
        ) if lens.sum() else np.empty(0, dtype=np.int64)
        rows = np.repeat(np.arange(b), lens)
        cols = indices[nz]
        vals = values[nz]
        logits = np.zeros((b, c), dtype=np.float64)
        if nz.size:
            np.add.at(logits, rows, wt[cols] * vals[:, None])
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        y = labels[batch]
        total += -np.log(np.maximum(probs[np.arange(b), y], 1e-300)).sum()
        delta = probs
        delta[np.arange(b), y] -= 1.0
        delta /= b
        if nz.size:
            np.add.at(wt, cols, -lr * vals[:, None] * delta[rows])
    return total / n


# ---------------------------------------------------------------- numba ----


@njit(cache=True)
def _predict_logits_jit(wt, indptr, indices, values):  # pragma: no cover
    n = indptr.shape[0] - 1
    c = wt.shape[1]
    logits = np.zeros((n, c), dtype=np.float64)
    for i in range(n):
        for j in range(indptr[i], indptr[i + 1]):
            col = indices[j]
            v = values[j]
            for k in range(c):
                logits[i, k] += wt[col, k] * v
    return logits


@njit(cache=True)
def _sgd_epoch_jit(wt, indptr, indices, values, labels, order, lr, l2, batch_size):  # pragma: no cover
    n = labels.shape[0]
    d, c = wt.shape
    total = 0.0
    delta = np.zeros((batch_size, c), dtype=np.float64)
    for bstart in range(0, n, batch_size):
        bend = min(bstart + batch_size, n)
        b = bend - bstart
        if l2 > 0.0:
            decay = 1.0 - lr * l2
            for dd in range(d):
                for k in range(c):
                    wt[dd, k] *= decay
        # forward pass on pre-step weights
        for t in range(b):
            i = order[bstart + t]
            mx = -1e308
            for k in range(c):
                s = 0.0
                for j in range(indptr[i], indptr[i + 1]):
                    s += wt[indices[j], k] * values[j]
                delta[t, k] = s
                if s > mx:
                    mx = s
            z = 0.0
            for k in range(c):
                delta[t, k] = np.exp(delta[t, k] - mx)
                z += delta[t, k]
            for k in range(c):
                delta[t, k] /= z
            p = delta[t, labels[i]]
            if p < 1e-300:
                p = 1e-300
            total += -np.log(p)
            delta[t, labels[i]] -= 1.0
            for k in range(c):
                delta[t, k] /= b
        # scatter the batch gradient
        for t in range(b):
            i = order[bstart + t]
            for j in range(indptr[i], indptr[i + 1]):
                col = indices[j]
                v = values[j]
                for k in range(c):
                    wt[col, k] -= lr * v * delta[t, k]
    return total / n


if _HAVE_NUMBA:
    predict_logits = _predict_logits_jit
    sgd_epoch = _sgd_epoch_jit
else:
    predict_logits = predict_logits_numpy
    sgd_epoch = sgd_epoch_numpy
