"""Tests for relation following and relational filtering.

Localist mode (one-hot embeddings, k covering every row) turns the
engine into an exact evaluator, so outputs are compared against the
brute-force symbolic oracle.
"""

import numpy as np
import pytest

from sketchql.cms import IncompatibleSketchError, WeightedSet, cm_lookup, empty_sketch
from sketchql.kbstore import TripleStore, Vocab
from sketchql.mips import top_k
from sketchql.queryeval import SymbolicKB, localist_embeddings
from sketchql.relops import Engine
from sketchql.setrep import UniverseMismatchError

from conftest import localist_engine, toy_store


class TestFollow:
    def test_matches_symbolic_oracle(self):
        rng = np.random.default_rng(1)
        store = toy_store(seed=1)
        engine = localist_engine(store)
        kb = SymbolicKB(store.triples)
        for trial in range(50):
            xs = frozenset(rng.choice(20, size=rng.integers(1, 4), replace=False).tolist())
            rels = frozenset(rng.choice(4, size=rng.integers(1, 3), replace=False).tolist())
            out = engine.follow(
                engine.encode_entities(WeightedSet.from_ids(xs)),
                engine.encode_relations(WeightedSet.from_ids(rels)),
            )
            got = engine.decode_entities(out).support()
            assert got == kb.follow(xs, rels), f"trial {trial}"

    def test_zero_sketch_input_gives_empty_result(self):
        store = toy_store(seed=2)
        engine = localist_engine(store)
        x = engine.encode_entities(WeightedSet.from_ids([0]))
        x_dead = x.with_sketch(empty_sketch(engine.ent_family))
        r = engine.encode_relations(WeightedSet.from_ids([0]))
        out = engine.follow(x_dead, r)
        assert len(engine.decode_entities(out)) == 0

    def test_object_block_contributes_nothing(self):
        # The follow query zero-pads the object block, so retrieval over
        # the full K must equal retrieval over its first 2d columns.
        store = toy_store(seed=3)
        engine = localist_engine(store)
        d = store.d
        x = engine.encode_entities(WeightedSet.from_ids([4]))
        r = engine.encode_relations(WeightedSet.from_ids([1]))
        q = np.concatenate([engine.lam * r.centroid, x.centroid, np.zeros(d)])
        ids_full, scores_full = top_k(q, store.K, engine.k)
        ids_cut, scores_cut = top_k(q[: 2 * d], store.K[:, : 2 * d], engine.k)
        assert np.array_equal(ids_full, ids_cut)
        assert np.array_equal(scores_full, scores_cut)

    def test_removing_sketch_member_never_raises_output(self):
        store = toy_store(seed=4)
        engine = localist_engine(store)
        kb = SymbolicKB(store.triples)
        subjects = sorted({s for _, s, _ in store.triples})[:2]
        full = engine.encode_entities(WeightedSet.from_ids(subjects))
        # Same centroid, sketch missing one member: scores may only drop.
        pruned = full.with_sketch(
            engine.encode_entities(WeightedSet.from_ids(subjects[:1])).sketch
        )
        rels = engine.encode_relations(WeightedSet.from_ids([0, 1, 2, 3]))
        out_full = engine.follow(full, rels)
        out_pruned = engine.follow(pruned, rels)
        reachable = kb.follow(frozenset(subjects), range(4))
        for y in reachable:
            assert cm_lookup(out_pruned.sketch, y) <= cm_lookup(out_full.sketch, y) + 1e-12

    def test_composes_with_itself(self):
        store = toy_store(seed=5)
        engine = localist_engine(store)
        kb = SymbolicKB(store.triples)
        x = frozenset([0, 1])
        rels = frozenset([0, 1])
        hop1 = engine.follow(
            engine.encode_entities(WeightedSet.from_ids(x)),
            engine.encode_relations(WeightedSet.from_ids(rels)),
        )
        hop2 = engine.follow(hop1, engine.encode_relations(WeightedSet.from_ids(rels)))
        expected = kb.follow(kb.follow(x, rels), rels)
        assert engine.decode_entities(hop2).support() == expected


class TestFilter:
    def test_keeps_subjects_with_edges_into_y(self):
        entities = Vocab(["c1", "c2", "cupertino", "paris"])
        relations = Vocab(["hq"])
        triples = [(0, 0, 2), (0, 1, 3)]
        store = TripleStore(entities, relations, triples)
        engine = localist_engine(store)
        out = engine.filter(
            engine.encode_entities(WeightedSet.from_ids([0, 1])),
            engine.encode_relations(WeightedSet.from_ids([0])),
            engine.encode_entities(WeightedSet.from_ids([2])),
        )
        assert engine.decode_entities(out).support() == {0}

    def test_matches_symbolic_oracle(self):
        rng = np.random.default_rng(6)
        store = toy_store(seed=6)
        engine = localist_engine(store)
        kb = SymbolicKB(store.triples)
        for trial in range(50):
            xs = frozenset(rng.choice(20, size=rng.integers(1, 5), replace=False).tolist())
            rels = frozenset(rng.choice(4, size=rng.integers(1, 3), replace=False).tolist())
            ys = frozenset(rng.choice(20, size=rng.integers(1, 5), replace=False).tolist())
            out = engine.filter(
                engine.encode_entities(WeightedSet.from_ids(xs)),
                engine.encode_relations(WeightedSet.from_ids(rels)),
                engine.encode_entities(WeightedSet.from_ids(ys)),
            )
            got = engine.decode_entities(out).support()
            assert got == kb.filter(xs, rels, ys), f"trial {trial}"

    def test_zero_sketch_objects_give_empty_result(self):
        store = toy_store(seed=7)
        engine = localist_engine(store)
        y = engine.encode_entities(WeightedSet.from_ids([0]))
        y_dead = y.with_sketch(empty_sketch(engine.ent_family))
        out = engine.filter(
            engine.encode_entities(WeightedSet.from_ids([0, 1])),
            engine.encode_relations(WeightedSet.from_ids([0])),
            y_dead,
        )
        assert len(engine.decode_entities(out)) == 0

    def test_filter_by_everything_returns_x(self):
        store = toy_store(seed=8)
        engine = localist_engine(store)
        kb = SymbolicKB(store.triples)
        subjects = sorted({s for _, s, _ in store.triples})[:3]
        everything = engine.encode_entities(WeightedSet.from_ids(range(20)))
        out = engine.filter(
            engine.encode_entities(WeightedSet.from_ids(subjects)),
            engine.encode_relations(WeightedSet.from_ids(range(4))),
            everything,
        )
        expected = kb.filter(frozenset(subjects), range(4), frozenset(range(20)))
        assert engine.decode_entities(out).support() == expected
        assert expected == frozenset(subjects)


class TestEngineValidation:
    def test_universe_tags_enforced(self):
        store = toy_store(seed=9)
        engine = localist_engine(store)
        ent = engine.encode_entities(WeightedSet.from_ids([0]))
        rel = engine.encode_relations(WeightedSet.from_ids([0]))
        with pytest.raises(UniverseMismatchError):
            engine.follow(rel, rel)
        with pytest.raises(UniverseMismatchError):
            engine.follow(ent, ent)

    def test_foreign_family_rejected(self):
        store = toy_store(seed=10)
        engine_a = localist_engine(store, seed=0)
        engine_b = Engine(store, k=engine_a.k, sketch_depth=8, sketch_width=512, seed=99)
        x = engine_b.encode_entities(WeightedSet.from_ids([0]))
        r = engine_a.encode_relations(WeightedSet.from_ids([0]))
        with pytest.raises(IncompatibleSketchError):
            engine_a.follow(x, r)

    def test_requires_embeddings(self):
        store = toy_store(seed=11)
        with pytest.raises(ValueError):
            Engine(store)
