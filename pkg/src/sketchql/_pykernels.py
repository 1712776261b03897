"""Pure numpy implementation of the sketch hash kernels.

This is the fallback backend used when the compiled extension
(``sketchql._cmcore``) is unavailable.  Both backends must produce
bit-identical results: the hash is a fixed 64-bit mixing function
(splitmix64 finalizer) evaluated with wrapping uint64 arithmetic.
"""

from __future__ import annotations

import numpy as np

# splitmix64 constants
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_U64 = np.uint64


def _mix(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = (z ^ (z >> _U64(30))) * _U64(_MIX1)
    z = (z ^ (z >> _U64(27))) * _U64(_MIX2)
    return z ^ (z >> _U64(31))


def row_keys(seed: int, depth: int) -> np.ndarray:
    """Per-row hash keys derived from the global seed; shape (depth,)."""
    s0 = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=_U64))[0]
    j = np.arange(1, depth + 1, dtype=_U64)
    return _mix(s0 + j * _U64(_GAMMA))


def hash_columns(ids: np.ndarray, seed: int, depth: int, width: int) -> np.ndarray:
    """Bucket column of each id under every row hash; shape (depth, n), int64."""
    keys = row_keys(seed, depth)
    spread = ids.astype(_U64) * _U64(_GAMMA)
    cols = _mix(keys[:, None] ^ spread[None, :]) % _U64(width)
    return cols.astype(np.int64)


def insert(table: np.ndarray, ids: np.ndarray, weights: np.ndarray, seed: int) -> None:
    """Scatter-add weights into every row of the table, in place.

    Entries are applied in array order; callers pass ids pre-sorted so the
    float32 accumulation order (and hence the result) is reproducible.
    """
    cols = hash_columns(ids, seed, table.shape[0], table.shape[1])
    w32 = weights.astype(np.float32)
    for j in range(table.shape[0]):
        np.add.at(table[j], cols[j], w32)


def lookup_min(table: np.ndarray, ids: np.ndarray, seed: int) -> np.ndarray:
    """Minimum across rows of each id's bucket; shape (n,), float32."""
    cols = hash_columns(ids, seed, table.shape[0], table.shape[1])
    rows = np.arange(table.shape[0])[:, None]
    return table[rows, cols].min(axis=0)
