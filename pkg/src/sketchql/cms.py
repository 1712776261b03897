"""Seeded count-min sketches over integer-id universes, with weighted-set
semantics.

A sketch is a depth x width float32 table plus a seeded family of per-row
hash functions.  Lookups take the minimum across rows and therefore never
underestimate the true weight of a non-negatively weighted set.  Sketches
built under the same family combine linearly: adding tables encodes the
weight-sum of the underlying sets, and the elementwise product encodes
(up to hash collisions) the weight-product.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class UniverseError(ValueError):
    """An element id falls outside the family's universe."""


class IncompatibleSketchError(ValueError):
    """Two sketches built under different hash families were combined."""


@dataclass(frozen=True)
class HashFamily:
    """A reproducible family of row hashes {0..universe-1} -> {0..width-1}.

    The same (seed, depth, width) always yields bit-identical hashes, on
    any platform and either kernel backend.
    """

    seed: int
    depth: int
    width: int
    universe: int

    def __post_init__(self) -> None:
        if self.depth < 1 or self.width < 1:
            raise ValueError(f"depth and width must be positive, got {self.depth}, {self.width}")
        if self.universe < 1:
            raise ValueError(f"universe must be positive, got {self.universe}")

    def columns(self, ids: np.ndarray) -> np.ndarray:
        """Bucket columns for an id array; shape (depth, len(ids))."""
        return kernels.hash_columns(ids, self.seed, self.depth, self.width)

    def check_ids(self, ids: np.ndarray) -> None:
        if ids.size and (ids.min() < 0 or ids.max() >= self.universe):
            bad = ids[(ids < 0) | (ids >= self.universe)][0]
            raise UniverseError(f"id {bad} outside universe [0, {self.universe})")


class WeightedSet:
    """Sparse map from element id to a positive finite weight.

    Zero-weight entries are dropped; negative, NaN or infinite weights are
    rejected so the min-based sketch lookup keeps its overestimate
    guarantee.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries=()):
        items = entries.items() if isinstance(entries, dict) else entries
        store: dict[int, float] = {}
        for i, w in items:
            i = int(i)
            w = float(w)
            if i < 0:
                raise UniverseError(f"negative element id {i}")
            if math.isnan(w) or math.isinf(w) or w < 0.0:
                raise ValueError(f"weight for id {i} must be finite and >= 0, got {w}")
            if w == 0.0:
                continue
            store[i] = store.get(i, 0.0) + w
        self._entries = store

    @classmethod
    def from_ids(cls, ids, weight: float = 1.0) -> "WeightedSet":
        return cls((i, weight) for i in ids)

    def items(self):
        return self._entries.items()

    def ids(self) -> np.ndarray:
        """Member ids, ascending; pairs with weights()."""
        return np.array(sorted(self._entries), dtype=np.int64)

    def weights(self) -> np.ndarray:
        return np.array([self._entries[i] for i in sorted(self._entries)], dtype=np.float64)

    def support(self) -> frozenset:
        return frozenset(self._entries)

    def get(self, i: int, default: float = 0.0) -> float:
        return self._entries.get(i, default)

    def __getitem__(self, i: int) -> float:
        return self._entries.get(i, 0.0)

    def __contains__(self, i: int) -> bool:
        return i in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __bool__(self) -> bool:
        return bool(self._entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, WeightedSet) and self._entries == other._entries

    def __repr__(self) -> str:
        return f"WeightedSet({self._entries!r})"


@dataclass(frozen=True)
class CountMinSketch:
    """A depth x width table of non-negative float32 cells plus its family.

    Immutable after construction; all combining operations return new
    sketches.
    """

    family: HashFamily
    table: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.table.shape != (self.family.depth, self.family.width):
            raise ValueError(
                f"table shape {self.table.shape} does not match family "
                f"({self.family.depth}, {self.family.width})"
            )
        self.table.flags.writeable = False


def _freeze(family: HashFamily, table: np.ndarray) -> CountMinSketch:
    return CountMinSketch(family=family, table=np.ascontiguousarray(table, dtype=np.float32))


def _check_same_family(a: CountMinSketch, b: CountMinSketch) -> None:
    if a.family != b.family:
        raise IncompatibleSketchError(f"hash families differ: {a.family} vs {b.family}")


def empty_sketch(family: HashFamily) -> CountMinSketch:
    return _freeze(family, np.zeros((family.depth, family.width), dtype=np.float32))


def vacuous_sketch(family: HashFamily) -> CountMinSketch:
    """All-ones sketch: lookups return 1.0 for every id, disabling filtering."""
    return _freeze(family, np.ones((family.depth, family.width), dtype=np.float32))


def sketch_insert(sketch: CountMinSketch, element_id: int, weight: float) -> CountMinSketch:
    """Return a copy with `weight` added to the element's cell in every row."""
    if weight < 0.0 or math.isnan(weight) or math.isinf(weight):
        raise ValueError(f"weight must be finite and >= 0, got {weight}")
    ids = np.array([element_id], dtype=np.int64)
    sketch.family.check_ids(ids)
    table = sketch.table.copy()
    kernels.insert(table, ids, np.array([weight], dtype=np.float32), sketch.family.seed)
    return _freeze(sketch.family, table)


def sketch_from_set(members: WeightedSet, family: HashFamily) -> CountMinSketch:
    """Sketch of a weighted set; equals folding sketch_insert over entries.

    Entries are inserted in ascending id order so the result does not
    depend on the iteration order of the input.
    """
    ids = members.ids()
    family.check_ids(ids)
    table = np.zeros((family.depth, family.width), dtype=np.float32)
    if ids.size:
        kernels.insert(table, ids, members.weights().astype(np.float32), family.seed)
    return _freeze(family, table)


def cm_lookup(sketch: CountMinSketch, element_id: int) -> float:
    """Min across rows of the element's cells; never underestimates."""
    return float(cm_lookup_many(sketch, np.array([element_id], dtype=np.int64))[0])


def cm_lookup_many(sketch: CountMinSketch, ids: np.ndarray) -> np.ndarray:
    """Vectorized cm_lookup; returns float64 array aligned with `ids`."""
    ids = np.asarray(ids, dtype=np.int64)
    sketch.family.check_ids(ids)
    if ids.size == 0:
        return np.zeros(0, dtype=np.float64)
    return kernels.lookup_min(sketch.table, ids, sketch.family.seed).astype(np.float64)


def sketch_add(a: CountMinSketch, b: CountMinSketch) -> CountMinSketch:
    """Elementwise sum; encodes the weight-sum of the two sets exactly."""
    _check_same_family(a, b)
    return _freeze(a.family, a.table + b.table)


def sketch_hadamard(a: CountMinSketch, b: CountMinSketch) -> CountMinSketch:
    """Elementwise product; encodes weight products up to hash collisions."""
    _check_same_family(a, b)
    return _freeze(a.family, a.table * b.table)


def sketch_mask_nonmembers(a: CountMinSketch, b: CountMinSketch) -> CountMinSketch:
    """Zero every cell of `a` where `b` is nonzero.

    Any id with a nonzero b-cell on its hash path then looks up as 0;
    this is an exact set difference when b encodes an unweighted set and
    no member of a-b collides with a member of b.
    """
    _check_same_family(a, b)
    return _freeze(a.family, np.where(b.table != 0.0, np.float32(0.0), a.table))


# --- serialization ---------------------------------------------------------

_MAGIC = b"CMSK"
_VERSION = 1
_HEADER = struct.Struct("<4sIQII")


def save_sketch(sketch: CountMinSketch, path) -> None:
    """Write header (magic, version, seed, depth, width) + LE float32 cells."""
    fam = sketch.family
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, fam.seed & 0xFFFFFFFFFFFFFFFF, fam.depth, fam.width))
        fh.write(np.ascontiguousarray(sketch.table, dtype="<f4").tobytes())


def load_sketch(path, universe: int) -> CountMinSketch:
    """Read a sketch written by save_sketch; round-trip is bit-exact.

    The universe size is not part of the file format and must be supplied
    by the caller.
    """
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError(f"truncated sketch file {path}")
        magic, version, seed, depth, width = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ValueError(f"not a sketch file: bad magic {magic!r}")
        if version != _VERSION:
            raise ValueError(f"unsupported sketch version {version}")
        data = fh.read(depth * width * 4)
    table = np.frombuffer(data, dtype="<f4").reshape(depth, width).astype(np.float32)
    return _freeze(HashFamily(seed=seed, depth=depth, width=width, universe=universe), table)


# --- statistical recovery suite -------------------------------------------

def recovery_failure_rate(
    m: int,
    n_candidates: int,
    depth: int,
    width: int,
    trials: int,
    seed: int,
    universe: int = 10_000,
) -> dict:
    """Empirical full-recovery failure rate for sets of size m.

    Each trial draws a fresh hash family and a random m-element set with
    small integer weights, sketches it, and checks that every candidate
    (members plus random non-members, n_candidates total) looks up exactly.
    The theoretical bound for width > 2m is
    delta = n_candidates / 2**depth.
    """
    if not n_candidates >= m:
        raise ValueError("candidate set must contain the member set")
    rng = np.random.default_rng(seed)
    failures = 0
    for trial in range(trials):
        chosen = rng.choice(universe, size=n_candidates, replace=False).astype(np.int64)
        member_ids = chosen[:m]
        weights = rng.integers(1, 9, size=m).astype(np.float64)
        family = HashFamily(seed=seed + trial + 1, depth=depth, width=width, universe=universe)
        sketch = sketch_from_set(WeightedSet(zip(member_ids, weights)), family)
        got = cm_lookup_many(sketch, chosen)
        true = np.zeros(n_candidates, dtype=np.float64)
        true[:m] = weights
        if not np.array_equal(got, true):
            failures += 1
    # The union bound saturates at 1 for shallow sketches.
    delta = min(1.0, n_candidates / 2.0**depth)
    return {
        "m": m,
        "n_candidates": n_candidates,
        "depth": depth,
        "width": width,
        "trials": trials,
        "failures": failures,
        "failure_rate": failures / trials,
        "delta": delta,
        "bound_3sigma": delta + 3.0 * math.sqrt(delta * (1.0 - delta) / trials),
    }
