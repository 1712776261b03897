"""Shared fixtures: small random KBs and localist engines."""

import numpy as np

from sketchql.kbstore import TripleStore, Vocab
from sketchql.queryeval import localist_embeddings
from sketchql.relops import Engine


def toy_store(n=20, n_rel=4, n_triples=60, seed=0) -> TripleStore:
    """Random KB with entity names ent0..entN-1 and relations rel0..."""
    rng = np.random.default_rng(seed)
    entities = Vocab(f"ent{i}" for i in range(n))
    relations = Vocab(f"rel{i}" for i in range(n_rel))
    triples = sorted({
        (int(r), int(s), int(o))
        for r, s, o in zip(
            rng.integers(0, n_rel, n_triples),
            rng.integers(0, n, n_triples),
            rng.integers(0, n, n_triples),
        )
    })
    return TripleStore(entities, relations, triples)


def localist_engine(store, lam=1.0, seed=0) -> Engine:
    """One-hot embeddings and k covering both entities and triples."""
    localist_embeddings(store)
    k = max(store.n_entities, store.n_triples)
    return Engine(store, k=k, lam=lam, sketch_depth=8, sketch_width=512, seed=seed)
