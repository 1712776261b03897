"""Query ASTs, an s-expression surface syntax, compositional evaluation
over centroid-sketch representations, and an exact symbolic evaluator.

Queries are built from basic entity sets, relation sets, follow, filter,
intersect, union, and difference. Embedded evaluation runs bottom-up and
keeps every intermediate result as a centroid-sketch pair; only the final
representation is decoded. The symbolic evaluator implements the same
operators with exact set semantics and serves as the ground-truth oracle
for training targets and faithfulness tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cms import WeightedSet
from .kbstore import TripleStore, build_triple_matrix
from .relops import Engine
from .setrep import SetRep, intersect as rep_intersect, union as rep_union, \
    difference as rep_difference, make_vacuous

ENTITY_PREFIX = "e:"
RELATION_PREFIX = "r:"


class QueryParseError(ValueError):
    """Bad query text; message carries the character offset."""


@dataclass(frozen=True)
class BasicSet:
    entity_ids: tuple[int, ...]


@dataclass(frozen=True)
class RelSet:
    relation_ids: tuple[int, ...]


@dataclass(frozen=True)
class Follow:
    child: "QueryNode"
    relations: RelSet


@dataclass(frozen=True)
class Filter:
    child: "QueryNode"
    relations: RelSet
    objects: "QueryNode"


@dataclass(frozen=True)
class Intersect:
    children: tuple["QueryNode", ...]


@dataclass(frozen=True)
class Union:
    children: tuple["QueryNode", ...]


@dataclass(frozen=True)
class Difference:
    left: "QueryNode"
    right: "QueryNode"


QueryNode = BasicSet | Follow | Filter | Intersect | Union | Difference


# --- parsing ----------------------------------------------------------------

def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append((ch, i))
            i += 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append((text[i:j], i))
            i = j
    return tokens


class _Parser:
    def __init__(self, text: str, store: TripleStore):
        self.text = text
        self.store = store
        self.tokens = _tokenize(text)
        self.pos = 0

    def fail(self, message: str, offset: int) -> None:
        raise QueryParseError(f"offset {offset}: {message}")

    def peek(self):
        if self.pos >= len(self.tokens):
            self.fail("unexpected end of input", len(self.text))
        return self.tokens[self.pos]

    def take(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, want: str):
        tok, off = self.take()
        if tok != want:
            self.fail(f"expected {want!r}, got {tok!r}", off)
        return off

    def parse(self) -> QueryNode:
        node = self.parse_query()
        if self.pos != len(self.tokens):
            tok, off = self.tokens[self.pos]
            self.fail(f"trailing input {tok!r}", off)
        return node

    def parse_query(self) -> QueryNode:
        self.expect("(")
        head, off = self.take()
        if head == "basic":
            node = BasicSet(entity_ids=self.parse_names(ENTITY_PREFIX, self.store.entities))
        elif head == "follow":
            child = self.parse_query()
            rels = self.parse_relset()
            node = Follow(child=child, relations=rels)
        elif head == "filter":
            child = self.parse_query()
            rels = self.parse_relset()
            objects = self.parse_query()
            node = Filter(child=child, relations=rels, objects=objects)
        elif head in ("intersect", "union"):
            children = [self.parse_query(), self.parse_query()]
            while self.peek()[0] == "(":
                children.append(self.parse_query())
            cls = Intersect if head == "intersect" else Union
            node = cls(children=tuple(children))
        elif head == "difference":
            node = Difference(left=self.parse_query(), right=self.parse_query())
        else:
            self.fail(f"unknown operator {head!r}", off)
        self.expect(")")
        return node

    def parse_relset(self) -> RelSet:
        self.expect("(")
        head, off = self.take()
        if head != "rel":
            self.fail(f"expected 'rel', got {head!r}", off)
        rels = RelSet(relation_ids=self.parse_names(RELATION_PREFIX, self.store.relations))
        self.expect(")")
        return rels

    def parse_names(self, prefix: str, vocab) -> tuple[int, ...]:
        ids = []
        while self.peek()[0] not in "()":
            tok, off = self.take()
            if not tok.startswith(prefix):
                self.fail(f"expected {prefix}name, got {tok!r}", off)
            name = tok[len(prefix):]
            if name not in vocab:
                self.fail(f"unknown name {name!r}", off)
            ids.append(vocab.id_of(name))
        if not ids:
            tok, off = self.peek()
            self.fail("expected at least one name", off)
        return tuple(ids)


def parse_query(text: str, store: TripleStore) -> QueryNode:
    """Parse one s-expression query, resolving names against the store."""
    return _Parser(text, store).parse()


def print_query(node: QueryNode, store: TripleStore) -> str:
    """Canonical s-expression; parse(print(q)) == q."""
    ent, rel = store.entities, store.relations
    if isinstance(node, BasicSet):
        names = " ".join(ENTITY_PREFIX + ent.name_of(i) for i in node.entity_ids)
        return f"(basic {names})"
    if isinstance(node, RelSet):
        names = " ".join(RELATION_PREFIX + rel.name_of(i) for i in node.relation_ids)
        return f"(rel {names})"
    if isinstance(node, Follow):
        return f"(follow {print_query(node.child, store)} {print_query(node.relations, store)})"
    if isinstance(node, Filter):
        return (
            f"(filter {print_query(node.child, store)} "
            f"{print_query(node.relations, store)} {print_query(node.objects, store)})"
        )
    if isinstance(node, Intersect):
        return "(intersect " + " ".join(print_query(c, store) for c in node.children) + ")"
    if isinstance(node, Union):
        return "(union " + " ".join(print_query(c, store) for c in node.children) + ")"
    if isinstance(node, Difference):
        return f"(difference {print_query(node.left, store)} {print_query(node.right, store)})"
    raise TypeError(f"not a query node: {node!r}")


# --- embedded evaluation -----------------------------------------------------

def evaluate_rep(node: QueryNode, engine: Engine) -> SetRep:
    """Bottom-up evaluation to a centroid-sketch pair, never decoding."""
    if isinstance(node, BasicSet):
        return engine.encode_entities(WeightedSet.from_ids(node.entity_ids))
    if isinstance(node, Follow):
        return engine.follow(evaluate_rep(node.child, engine), _rel_rep(node.relations, engine))
    if isinstance(node, Filter):
        return engine.filter(
            evaluate_rep(node.child, engine),
            _rel_rep(node.relations, engine),
            evaluate_rep(node.objects, engine),
        )
    if isinstance(node, Intersect):
        reps = [evaluate_rep(c, engine) for c in node.children]
        out = reps[0]
        for rep in reps[1:]:
            out = rep_intersect(out, rep)
        return out
    if isinstance(node, Union):
        reps = [evaluate_rep(c, engine) for c in node.children]
        out = reps[0]
        for rep in reps[1:]:
            out = rep_union(out, rep)
        return out
    if isinstance(node, Difference):
        return rep_difference(evaluate_rep(node.left, engine), evaluate_rep(node.right, engine))
    raise TypeError(f"not a query node: {node!r}")


def _rel_rep(rels: RelSet, engine: Engine) -> SetRep:
    return engine.encode_relations(WeightedSet.from_ids(rels.relation_ids))


def evaluate(node: QueryNode, engine: Engine, final_vacuous: bool = False,
             k: int | None = None) -> WeightedSet:
    """Evaluate and decode the final representation.

    final_vacuous swaps the outermost sketch (and only that one) for an
    all-ones sketch before decoding, so candidates near the answer
    centroid survive without exact-membership support.
    """
    rep = evaluate_rep(node, engine)
    if final_vacuous:
        rep = make_vacuous(rep)
    return engine.decode_entities(rep, k)


def ranked(weights: WeightedSet) -> list[int]:
    """Ids by descending weight, ascending id on ties."""
    return [i for i, _ in sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))]


# --- symbolic oracle ---------------------------------------------------------

class SymbolicKB:
    """Adjacency indexes over a triple list for exact set evaluation."""

    def __init__(self, triples):
        self.out_edges: dict[int, dict[int, set[int]]] = {}
        self.in_pairs: dict[int, set[tuple[int, int]]] = {}
        for r, s, o in triples:
            self.out_edges.setdefault(r, {}).setdefault(s, set()).add(o)
            self.in_pairs.setdefault(r, set()).add((s, o))

    def follow(self, subjects: frozenset, relations) -> frozenset:
        out: set[int] = set()
        for r in relations:
            by_subject = self.out_edges.get(r, {})
            for s in subjects:
                out |= by_subject.get(s, set())
        return frozenset(out)

    def filter(self, subjects: frozenset, relations, objects: frozenset) -> frozenset:
        kept: set[int] = set()
        for r in relations:
            by_subject = self.out_edges.get(r, {})
            for s in subjects:
                if s in kept:
                    continue
                if by_subject.get(s, set()) & objects:
                    kept.add(s)
        return frozenset(kept)


def symbolic_evaluate(node: QueryNode, kb) -> frozenset:
    """Exact set semantics over a SymbolicKB or raw triple list."""
    if not isinstance(kb, SymbolicKB):
        kb = SymbolicKB(kb)
    if isinstance(node, BasicSet):
        return frozenset(node.entity_ids)
    if isinstance(node, Follow):
        return kb.follow(symbolic_evaluate(node.child, kb), node.relations.relation_ids)
    if isinstance(node, Filter):
        return kb.filter(
            symbolic_evaluate(node.child, kb),
            node.relations.relation_ids,
            symbolic_evaluate(node.objects, kb),
        )
    if isinstance(node, Intersect):
        parts = [symbolic_evaluate(c, kb) for c in node.children]
        return frozenset.intersection(*parts)
    if isinstance(node, Union):
        parts = [symbolic_evaluate(c, kb) for c in node.children]
        return frozenset.union(*parts)
    if isinstance(node, Difference):
        return symbolic_evaluate(node.left, kb) - symbolic_evaluate(node.right, kb)
    raise TypeError(f"not a query node: {node!r}")


# --- localist test mode ------------------------------------------------------

def localist_embeddings(store: TripleStore) -> None:
    """One-hot embeddings (d = N) making the pipeline an exact evaluator.

    Entity i maps to unit vector e_i; relation embeddings are one-hot
    padded to d columns, which requires N_R <= N.
    """
    n, n_rel = store.n_entities, store.n_relations
    if n_rel > n:
        raise ValueError(f"localist mode needs N_R <= N, got {n_rel} > {n}")
    store.set_embeddings(np.eye(n, dtype=np.float32), np.eye(n_rel, n, dtype=np.float32))
    build_triple_matrix(store)


# --- query / answer files ----------------------------------------------------

def write_queries(path, nodes, store: TripleStore) -> None:
    """One s-expression per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for node in nodes:
            fh.write(print_query(node, store) + "\n")


def read_queries(path, store: TripleStore) -> list[QueryNode]:
    nodes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                nodes.append(parse_query(line, store))
            except QueryParseError as err:
                raise QueryParseError(f"{path}:{lineno}: {err}") from None
    return nodes


def write_answers(path, answers, store: TripleStore) -> None:
    """Lines of query-id<TAB>entity names, ranked best first."""
    ent = store.entities
    with open(path, "w", encoding="utf-8") as fh:
        for qid, ids in answers:
            fh.write(f"{qid}\t" + " ".join(ent.name_of(i) for i in ids) + "\n")
