"""Tests exact top-k retrieval against a full-sort oracle."""

import numpy as np
import pytest

from sketchql.mips import top_k, top_k_batch


def oracle_top_k(query, matrix, k):
    """Independent reference: full float64 scores, stable sort on (-score, id)."""
    scores = matrix.astype(np.float64) @ query.astype(np.float64)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))[:k]
    return np.array(order, dtype=np.int64), scores[order]


class TestTopK:
    def test_matches_oracle_random(self):
        rng = np.random.default_rng(42)
        for _ in range(30):
            n, d = int(rng.integers(5, 400)), int(rng.integers(2, 32))
            matrix = rng.normal(size=(n, d)).astype(np.float32)
            query = rng.normal(size=d).astype(np.float32)
            k = int(rng.integers(1, n + 3))
            ids, scores = top_k(query, matrix, k)
            oid, osc = oracle_top_k(query, matrix, min(k, n))
            assert np.array_equal(ids, oid)
            assert np.array_equal(scores, osc)

    def test_duplicate_rows_break_ties_by_id(self):
        # Rows 2, 5, 7 are identical and top-scoring; k=2 must keep 2, 5.
        matrix = np.zeros((10, 3), dtype=np.float32)
        for i in (2, 5, 7):
            matrix[i] = [1.0, 1.0, 1.0]
        ids, scores = top_k(np.ones(3, dtype=np.float32), matrix, 2)
        assert ids.tolist() == [2, 5]
        assert scores.tolist() == [3.0, 3.0]

    def test_boundary_tie_across_partition(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            # Coarse integer scores force many boundary ties.
            matrix = rng.integers(0, 3, size=(50, 1)).astype(np.float32)
            query = np.ones(1, dtype=np.float32)
            k = int(rng.integers(1, 50))
            ids, scores = top_k(query, matrix, k)
            oid, osc = oracle_top_k(query, matrix, k)
            assert np.array_equal(ids, oid), f"trial {trial}"
            assert np.array_equal(scores, osc)

    def test_k_larger_than_rows_returns_all(self):
        matrix = np.array([[1.0], [3.0], [2.0]], dtype=np.float32)
        ids, scores = top_k(np.ones(1, dtype=np.float32), matrix, 10)
        assert ids.tolist() == [1, 2, 0]
        assert scores.tolist() == [3.0, 2.0, 1.0]

    def test_scores_accumulated_in_float64(self):
        # 2^24 + 1 is unrepresentable in float32; a float64 accumulator
        # must distinguish the two rows.
        matrix = np.array([[2.0**24, 1.0], [2.0**24, 0.0]], dtype=np.float32)
        query = np.ones(2, dtype=np.float32)
        ids, scores = top_k(query, matrix, 1)
        assert ids.tolist() == [0]
        assert scores[0] == 2.0**24 + 1.0

    def test_input_validation(self):
        matrix = np.zeros((4, 3), dtype=np.float32)
        with pytest.raises(ValueError):
            top_k(np.zeros(2, dtype=np.float32), matrix, 1)
        with pytest.raises(ValueError):
            top_k(np.zeros(3, dtype=np.float32), matrix, 0)
        with pytest.raises(ValueError):
            top_k(np.zeros(3, dtype=np.float32), np.zeros(3, dtype=np.float32), 1)


class TestTopKBatch:
    def test_matches_single_queries(self):
        rng = np.random.default_rng(9)
        matrix = rng.normal(size=(100, 8)).astype(np.float32)
        queries = rng.normal(size=(7, 8)).astype(np.float32)
        batched = top_k_batch(queries, matrix, 5)
        for b in range(7):
            ids, scores = top_k(queries[b], matrix, 5)
            assert np.array_equal(batched[b][0], ids)
            assert np.array_equal(batched[b][1], scores)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            top_k_batch(np.zeros((2, 4), dtype=np.float32), np.zeros((5, 3), dtype=np.float32), 1)
