"""Exact top-k retrieval by inner product.

Scores are accumulated in float64 even for float32 inputs, and ties on
the boundary score break toward the lower row id, so results are
deterministic across platforms and BLAS builds.
"""

from __future__ import annotations

import numpy as np


def top_k(query: np.ndarray, matrix: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and scores of the k largest rows of `matrix @ query`.

    Returns (ids, scores) sorted by descending score, ascending id on
    ties. If k exceeds the number of rows, all rows are returned.
    """
    query = np.asarray(query)
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError(f"matrix must be 2-d, got shape {matrix.shape}")
    if query.shape != (matrix.shape[1],):
        raise ValueError(f"query shape {query.shape} does not match matrix width {matrix.shape[1]}")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    scores = matrix.astype(np.float64, copy=False) @ query.astype(np.float64, copy=False)
    return top_k_from_scores(scores, k)


def top_k_batch(queries: np.ndarray, matrix: np.ndarray, k: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """top_k for each row of `queries`.

    Row-by-row on purpose: a fused matmul can accumulate in a different
    order than the single-query matvec, and batch results must be
    bit-identical to single-query results.
    """
    queries = np.asarray(queries)
    if queries.ndim != 2:
        raise ValueError(f"queries must be 2-d, got shape {queries.shape}")
    return [top_k(queries[b], matrix, k) for b in range(queries.shape[0])]


def top_k_from_scores(scores: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic selection on an already-computed score vector."""
    n = scores.shape[0]
    if k >= n:
        ids = np.lexsort((np.arange(n), -scores))
        return ids.astype(np.int64), scores[ids]
    # argpartition gives an arbitrary subset when the boundary score is
    # tied; rebuild the boundary deterministically from all tied rows.
    part = np.argpartition(scores, n - k)[n - k:]
    boundary = scores[part].min()
    above = np.flatnonzero(scores > boundary)
    tied = np.flatnonzero(scores == boundary)
    take = np.concatenate([above, np.sort(tied)[: k - above.size]])
    order = np.lexsort((take, -scores[take]))
    ids = take[order].astype(np.int64)
    return ids, scores[ids]
