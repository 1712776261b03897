"""Relation following and relational filtering over embedded triples.

Both operators build a 3d query vector from centroid blocks, retrieve the
top-k triple rows by inner product, re-score each candidate triple with
sketch lookups times a candidate-local softmax, and aggregate scores onto
the output entities (objects for follow, subjects for filter). The result
is re-encoded as a centroid-sketch pair so operators compose without ever
materializing an entity list in between.
"""

from __future__ import annotations

import numpy as np

from .cms import HashFamily, IncompatibleSketchError, WeightedSet, cm_lookup_many
from .kbstore import TripleStore
from .mips import top_k
from .setrep import (
    ENTITIES,
    RELATIONS,
    SetRep,
    UniverseMismatchError,
    decode,
    empty_rep,
    encode,
    make_vacuous,
    stable_softmax,
)


class Engine:
    """Binds a store to hash families and retrieval hyperparameters.

    All representations flowing through one engine share its two hash
    families (entity universe and relation universe), both derived from
    a single seed. With vacuous=True every encoded sketch is replaced by
    the all-ones table, disabling sketch filtering entirely (the ablation
    baseline) while leaving the centroid path untouched.
    """

    def __init__(self, store: TripleStore, k: int = 1000, lam: float = 1.0,
                 sketch_depth: int = 20, sketch_width: int = 2000, seed: int = 0,
                 vacuous: bool = False):
        if store.E is None or store.R_emb is None:
            raise ValueError("engine requires a store with embeddings")
        if k < 1:
            raise ValueError(f"k must be positive, got {k}")
        self.store = store
        self.k = k
        self.lam = float(lam)
        self.seed = seed
        self.vacuous = vacuous
        self.ent_family = HashFamily(seed=seed, depth=sketch_depth, width=sketch_width,
                                     universe=store.n_entities)
        self.rel_family = HashFamily(seed=seed, depth=sketch_depth, width=sketch_width,
                                     universe=store.n_relations)

    # -- encoding / decoding -------------------------------------------

    def encode_entities(self, members: WeightedSet) -> SetRep:
        rep = encode(members, self.store.E, self.ent_family, universe=ENTITIES)
        return make_vacuous(rep) if self.vacuous else rep

    def encode_relations(self, members: WeightedSet) -> SetRep:
        rep = encode(members, self.store.R_emb, self.rel_family, universe=RELATIONS)
        return make_vacuous(rep) if self.vacuous else rep

    def decode_entities(self, rep: SetRep, k: int | None = None) -> WeightedSet:
        self._expect(rep, ENTITIES)
        return decode(rep, self.store.E, self.k if k is None else k)

    def empty_entities(self) -> SetRep:
        return empty_rep(self.store.d, self.ent_family, universe=ENTITIES)

    def reencode(self, weights: WeightedSet) -> SetRep:
        """Encode an operator's sparse output; empty input stays empty."""
        if not weights:
            return self.empty_entities()
        return self.encode_entities(weights)

    # -- relational operators ------------------------------------------

    def follow(self, X: SetRep, R: SetRep) -> SetRep:
        """Entities related to something in X via some relation in R.

        Query [lam*a_R ; a_X ; 0]; candidate triples are re-scored by
        CM(relation) * CM(subject) * softmax and their scores summed per
        object entity.
        """
        self._expect(X, ENTITIES)
        self._expect(R, RELATIONS)
        d = self.store.d
        q = np.concatenate([self.lam * R.centroid, X.centroid, np.zeros(d)])
        ids, scores = top_k(q, self.store.K, self.k)
        probs = stable_softmax(scores)
        s = (
            cm_lookup_many(R.sketch, self.store.rel_ids[ids])
            * cm_lookup_many(X.sketch, self.store.subj_ids[ids])
            * probs
        )
        out_ids = self.store.obj_ids[ids]
        return self.reencode(WeightedSet(zip(out_ids.tolist(), s.tolist())))

    def filter(self, X: SetRep, R: SetRep, Y: SetRep) -> SetRep:
        """Members of X with some R-edge into Y.

        Query [lam*a_R ; a_X ; a_Y]; scores gain an object-sketch factor
        and are summed per subject entity.
        """
        self._expect(X, ENTITIES)
        self._expect(R, RELATIONS)
        self._expect(Y, ENTITIES)
        q = np.concatenate([self.lam * R.centroid, X.centroid, Y.centroid])
        ids, scores = top_k(q, self.store.K, self.k)
        probs = stable_softmax(scores)
        s = (
            cm_lookup_many(R.sketch, self.store.rel_ids[ids])
            * cm_lookup_many(X.sketch, self.store.subj_ids[ids])
            * cm_lookup_many(Y.sketch, self.store.obj_ids[ids])
            * probs
        )
        out_ids = self.store.subj_ids[ids]
        return self.reencode(WeightedSet(zip(out_ids.tolist(), s.tolist())))

    # -- internals -------------------------------------------------------

    def _expect(self, rep: SetRep, universe: str) -> None:
        if rep.universe != universe:
            raise UniverseMismatchError(f"expected a {universe} rep, got {rep.universe}")
        family = self.ent_family if universe == ENTITIES else self.rel_family
        if rep.sketch.family != family:
            raise IncompatibleSketchError(
                "representation was built under a different hash family than this engine"
            )
