"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time: numba is used when it imports
cleanly, unless the environment variable ``LATENTPLC_NO_NUMBA`` is set to
``1``/``true``/``yes``. Both paths perform the same floating-point
operations in the same order, so results are bit-identical across
backends. ``benchmarks/bench_kernels.py`` compares their speed.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_FLAG = "LATENTPLC_NO_NUMBA"


def _numba_disabled() -> bool:
    return os.environ.get(_ENV_FLAG, "").strip().lower() in {"1", "true", "yes"}


try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and not _numba_disabled()
BACKEND = "numba" if USE_NUMBA else "numpy"


def nearest_rows_numpy(x: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Index of the squared-Euclidean-nearest row for each vector in x.

    x has shape (n, d), rows has shape (k, d). Ties break to the lowest
    index. Distances accumulate dimension-by-dimension so the arithmetic
    matches the numba kernel exactly.
    """
    n = x.shape[0]
    k = rows.shape[0]
    dist = np.zeros((n, k), dtype=np.float64)
    for j in range(x.shape[1]):
        diff = x[:, j, np.newaxis] - rows[np.newaxis, :, j]
        dist += diff * diff
    return np.argmin(dist, axis=1).astype(np.int64)


def scatter_accumulate_numpy(
    x: np.ndarray, idx: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-index counts and per-index vector sums of x grouped by idx."""
    counts = np.bincount(idx, minlength=k).astype(np.float64)
    sums = np.zeros((k, x.shape[1]), dtype=np.float64)
    np.add.at(sums, idx, x)
    return counts, sums


if numba is not None:

    @numba.njit(cache=True)
    def nearest_rows_numba(x, rows):  # pragma: no cover - covered via dispatch
        n, d = x.shape
        k = rows.shape[0]
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            best = 0
            best_dist = np.inf
            for c in range(k):
                acc = 0.0
                for j in range(d):
                    t = x[i, j] - rows[c, j]
                    acc += t * t
                if acc < best_dist:
                    best_dist = acc
                    best = c
            out[i] = best
        return out

    @numba.njit(cache=True)
    def scatter_accumulate_numba(x, idx, k):  # pragma: no cover
        d = x.shape[1]
        counts = np.zeros(k, dtype=np.float64)
        sums = np.zeros((k, d), dtype=np.float64)
        for i in range(x.shape[0]):
            c = idx[i]
            counts[c] += 1.0
            for j in range(d):
                sums[c, j] += x[i, j]
        return counts, sums


def nearest_rows(x: np.ndarray, rows: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    if x.ndim != 2 or rows.ndim != 2 or x.shape[1] != rows.shape[1]:
        raise ValueError(
            f"shape mismatch: vectors {x.shape} vs codebook rows {rows.shape}"
        )
    if USE_NUMBA:
        return nearest_rows_numba(x, rows)
    return nearest_rows_numpy(x, rows)


def scatter_accumulate(
    x: np.ndarray, idx: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    x = np.ascontiguousarray(x, dtype=np.float64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if x.shape[0] != idx.shape[0]:
        raise ValueError("x and idx length mismatch")
    if USE_NUMBA:
        return scatter_accumulate_numba(x, idx, k)
    return scatter_accumulate_numpy(x, idx, k)
