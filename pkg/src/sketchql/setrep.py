"""Centroid-sketch set representations and their set operators.

A weighted entity (or relation) set is carried as a pair: a dense
centroid, the weighted SUM of member embeddings, plus a count-min sketch
of the exact member weights. The centroid drives nearest-candidate
retrieval; the sketch filters retrieved candidates back down to actual
members.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cms import (
    CountMinSketch,
    HashFamily,
    WeightedSet,
    cm_lookup_many,
    empty_sketch,
    sketch_add,
    sketch_from_set,
    sketch_hadamard,
    sketch_mask_nonmembers,
    vacuous_sketch,
)
from .mips import top_k

ENTITIES = "entities"
RELATIONS = "relations"


class EmptySetError(ValueError):
    """Encoding an empty set; its centroid is undefined."""


class UniverseMismatchError(TypeError):
    """Entity and relation representations were combined."""


@dataclass(frozen=True)
class SetRep:
    """Immutable (centroid, sketch) pair tagged with its universe."""

    centroid: np.ndarray = field(repr=False)
    sketch: CountMinSketch = field(repr=False)
    universe: str

    def __post_init__(self) -> None:
        if self.universe not in (ENTITIES, RELATIONS):
            raise UniverseMismatchError(f"unknown universe tag {self.universe!r}")
        if not np.isfinite(self.centroid).all():
            raise ValueError("centroid must be finite")
        self.centroid.flags.writeable = False

    def with_sketch(self, sketch: CountMinSketch) -> "SetRep":
        return SetRep(centroid=self.centroid.copy(), sketch=sketch, universe=self.universe)


def _check_compatible(a: SetRep, b: SetRep) -> None:
    if a.universe != b.universe:
        raise UniverseMismatchError(f"cannot combine {a.universe} rep with {b.universe} rep")


def empty_rep(d: int, family: HashFamily, universe: str = ENTITIES) -> SetRep:
    """The empty set: zero centroid, zero sketch; decodes to no elements."""
    return SetRep(centroid=np.zeros(d, dtype=np.float64), sketch=empty_sketch(family), universe=universe)


def encode(members: WeightedSet, matrix: np.ndarray, family: HashFamily,
           universe: str = ENTITIES) -> SetRep:
    """(weighted sum of embedding rows, sketch of exact weights)."""
    if not members:
        raise EmptySetError("cannot encode an empty set")
    ids = members.ids()
    if ids[-1] >= matrix.shape[0]:
        raise ValueError(f"id {ids[-1]} outside embedding matrix with {matrix.shape[0]} rows")
    centroid = members.weights() @ matrix[ids].astype(np.float64)
    return SetRep(centroid=centroid, sketch=sketch_from_set(members, family), universe=universe)


def decode(rep: SetRep, matrix: np.ndarray, k: int) -> WeightedSet:
    """Top-k candidates by centroid inner product, softmaxed, sketch-filtered.

    The softmax normalizes over exactly the k retrieved scores; candidates
    whose sketch lookup is 0 are dropped, so the result has at most k
    nonzeros and the empty set is a legitimate outcome.
    """
    ids, scores = top_k(rep.centroid, matrix, k)
    probs = stable_softmax(scores)
    weights = cm_lookup_many(rep.sketch, ids) * probs
    return WeightedSet(zip(ids.tolist(), weights.tolist()))


def intersect(a: SetRep, b: SetRep) -> SetRep:
    """Centroid average, sketch product (weight product up to collisions)."""
    _check_compatible(a, b)
    return SetRep(
        centroid=0.5 * (a.centroid + b.centroid),
        sketch=sketch_hadamard(a.sketch, b.sketch),
        universe=a.universe,
    )


def union(a: SetRep, b: SetRep) -> SetRep:
    """Centroid average, sketch sum (exact weight sum)."""
    _check_compatible(a, b)
    return SetRep(
        centroid=0.5 * (a.centroid + b.centroid),
        sketch=sketch_add(a.sketch, b.sketch),
        universe=a.universe,
    )


def difference(a: SetRep, b: SetRep) -> SetRep:
    """Keep a's centroid; zero every sketch cell b touches.

    Exact when b encodes an unweighted set and no kept member of a
    collides with a member of b on all rows.
    """
    _check_compatible(a, b)
    return SetRep(
        centroid=a.centroid.copy(),
        sketch=sketch_mask_nonmembers(a.sketch, b.sketch),
        universe=a.universe,
    )


def make_vacuous(rep: SetRep) -> SetRep:
    """Swap in an all-ones sketch, keeping the centroid; disables filtering."""
    return rep.with_sketch(vacuous_sketch(rep.sketch.family))


def stable_softmax(scores: np.ndarray) -> np.ndarray:
    """Softmax in float64 with max subtraction; safe for large scores."""
    scores = np.asarray(scores, dtype=np.float64)
    shifted = scores - scores.max()
    e = np.exp(shifted)
    return e / e.sum()
