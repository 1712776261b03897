"""Knowledge-base ingestion, vocabularies, embeddings, and the triple
embedding matrix.

A KB is a list of (relation-id, subject-id, object-id) triples over two
dense vocabularies. Embeddings are float32 matrices E (entities) and
R_emb (relations); the triple matrix K holds one row per triple, the
concatenation [e_r ; e_subject ; e_object], and must be rebuilt after any
embedding update before retrieval.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

INVERSE_SUFFIX = "_inv"


class KBParseError(ValueError):
    """A triple line that is not subject<TAB>relation<TAB>object."""


class EmptyKBError(ValueError):
    """The triple file contained no triples."""


class UninitializedEmbeddingError(RuntimeError):
    """Embeddings were required before being initialized or loaded."""


class StaleTripleMatrixError(RuntimeError):
    """The triple matrix was read after an embedding update without a rebuild."""


class Vocab:
    """Bijective name <-> dense id map, ids assigned in first-appearance order."""

    __slots__ = ("_names", "_ids")

    def __init__(self, names=()):
        self._names: list[str] = []
        self._ids: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        got = self._ids.get(name)
        if got is not None:
            return got
        new_id = len(self._names)
        self._names.append(name)
        self._ids[name] = new_id
        return new_id

    def id_of(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise KeyError(f"unknown name {name!r}") from None

    def name_of(self, i: int) -> str:
        if not 0 <= i < len(self._names):
            raise IndexError(f"id {i} outside [0, {len(self._names)})")
        return self._names[i]

    def names(self) -> list[str]:
        return list(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)


class TripleStore:
    """Triples plus (optional) embeddings and the derived triple matrix.

    Embeddings are attached with set_embeddings and frozen; the triple
    matrix K is only valid for the embedding version it was built from,
    and reading a stale K raises instead of silently approximating.
    """

    def __init__(self, entities: Vocab, relations: Vocab, triples: list[tuple[int, int, int]]):
        self.entities = entities
        self.relations = relations
        self.triples = list(triples)
        arr = np.array(self.triples, dtype=np.int64).reshape(-1, 3)
        self.rel_ids = arr[:, 0].copy()
        self.subj_ids = arr[:, 1].copy()
        self.obj_ids = arr[:, 2].copy()
        self.E: np.ndarray | None = None
        self.R_emb: np.ndarray | None = None
        self.embedding_seed = 0
        self._version = 0
        self._k_matrix: np.ndarray | None = None
        self._k_version = -1

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def n_triples(self) -> int:
        return len(self.triples)

    @property
    def d(self) -> int:
        if self.E is None:
            raise UninitializedEmbeddingError("embeddings not initialized")
        return self.E.shape[1]

    def set_embeddings(self, E: np.ndarray, R_emb: np.ndarray, seed: int = 0) -> None:
        E = np.ascontiguousarray(E, dtype=np.float32)
        R_emb = np.ascontiguousarray(R_emb, dtype=np.float32)
        if E.ndim != 2 or E.shape[0] != self.n_entities:
            raise ValueError(f"E shape {E.shape} does not match {self.n_entities} entities")
        if R_emb.shape != (self.n_relations, E.shape[1]):
            raise ValueError(
                f"R_emb shape {R_emb.shape} does not match "
                f"({self.n_relations}, {E.shape[1]})"
            )
        E.flags.writeable = False
        R_emb.flags.writeable = False
        self.E = E
        self.R_emb = R_emb
        self.embedding_seed = seed
        self._version += 1

    @property
    def K(self) -> np.ndarray:
        """Triple matrix for the current embeddings; raises when stale."""
        if self._k_matrix is None or self._k_version != self._version:
            raise StaleTripleMatrixError(
                "triple matrix not built for current embeddings; call build_triple_matrix"
            )
        return self._k_matrix

    @property
    def has_current_K(self) -> bool:
        return self._k_matrix is not None and self._k_version == self._version


def load_kb(path, max_fanout: int = 0) -> TripleStore:
    """Parse a subject<TAB>relation<TAB>object file into a TripleStore.

    Ids follow first appearance in the file; duplicate triples are kept
    once. With max_fanout > 0, every (subject, relation) group holding
    more than that many objects is dropped whole.
    """
    entities = Vocab()
    relations = Vocab()
    triples: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise KBParseError(
                    f"{path}:{lineno}: expected subject<TAB>relation<TAB>object, got {line!r}"
                )
            subj, rel, obj = parts
            triple = (relations.add(rel), entities.add(subj), entities.add(obj))
            if triple not in seen:
                seen.add(triple)
                triples.append(triple)
    if not triples:
        raise EmptyKBError(f"{path}: no triples found")
    if max_fanout > 0:
        triples = _apply_fanout_cap(triples, max_fanout)
        if not triples:
            raise EmptyKBError(f"{path}: every triple removed by max_fanout={max_fanout}")
    store = TripleStore(entities, relations, triples)
    log.info(
        "loaded %s: %d entities, %d relations, %d triples",
        path, store.n_entities, store.n_relations, store.n_triples,
    )
    return store


def _apply_fanout_cap(triples, max_fanout):
    counts: dict[tuple[int, int], int] = {}
    for r, s, _ in triples:
        counts[(s, r)] = counts.get((s, r), 0) + 1
    kept = [t for t in triples if counts[(t[1], t[0])] <= max_fanout]
    dropped = len(triples) - len(kept)
    if dropped:
        log.info("max_fanout=%d dropped %d triples", max_fanout, dropped)
    return kept


def add_inverse_relations(store: TripleStore) -> TripleStore:
    """Return a new store with r_inv(y,x) for every r(x,y); doubles N_R.

    Must run before embeddings are attached (the relation count changes).
    """
    relations = Vocab(store.relations.names())
    base = len(relations)
    for name in store.relations.names():
        inv = name + INVERSE_SUFFIX
        if inv in relations:
            raise ValueError(f"inverse relation name collision: {inv!r}")
        relations.add(inv)
    triples = list(store.triples)
    for r, s, o in store.triples:
        triples.append((r + base, o, s))
    return TripleStore(Vocab(store.entities.names()), relations, triples)


def init_embeddings(store: TripleStore, d: int, seed: int) -> None:
    """Seeded uniform init in [-1/sqrt(d), 1/sqrt(d)] for E and R_emb."""
    if d < 1:
        raise ValueError(f"d must be positive, got {d}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(d)
    E = rng.uniform(-bound, bound, size=(store.n_entities, d)).astype(np.float32)
    R_emb = rng.uniform(-bound, bound, size=(store.n_relations, d)).astype(np.float32)
    store.set_embeddings(E, R_emb, seed=seed)


def build_triple_matrix(store: TripleStore) -> TripleStore:
    """(Re)build K with row t = [e_r ; e_subject ; e_object] for triple t."""
    if store.E is None or store.R_emb is None:
        raise UninitializedEmbeddingError("embeddings must be set before building K")
    K = np.concatenate(
        [store.R_emb[store.rel_ids], store.E[store.subj_ids], store.E[store.obj_ids]],
        axis=1,
    ).astype(np.float32, copy=False)
    K.flags.writeable = False
    store._k_matrix = K
    store._k_version = store._version
    return store


@dataclass(frozen=True)
class KBSplit:
    """A training subset of a full KB; held_out = full - train."""

    train_triples: list = field(repr=False)
    full_triples: list = field(repr=False)

    def __post_init__(self) -> None:
        train, full = set(self.train_triples), set(self.full_triples)
        if not train <= full:
            raise ValueError("training triples must be a subset of the full KB")

    @property
    def held_out(self) -> list:
        train = set(self.train_triples)
        return [t for t in self.full_triples if t not in train]


# --- checkpoint serialization ----------------------------------------------

_MAGIC = b"EMBK"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQQQ")


def save_checkpoint(store: TripleStore, path) -> None:
    """Header (magic, version, N, N_R, d, seed) + E then R_emb as LE float32."""
    if store.E is None or store.R_emb is None:
        raise UninitializedEmbeddingError("no embeddings to save")
    n, d = store.E.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, n, store.n_relations, d,
                              store.embedding_seed & 0xFFFFFFFFFFFFFFFF))
        fh.write(np.ascontiguousarray(store.E, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(store.R_emb, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[np.ndarray, np.ndarray, int]:
    """Read (E, R_emb, seed) written by save_checkpoint; bit-exact round-trip."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError(f"truncated checkpoint {path}")
        magic, version, n, n_rel, d, seed = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        body = fh.read((n + n_rel) * d * 4)
    if len(body) != (n + n_rel) * d * 4:
        raise ValueError(f"truncated checkpoint {path}")
    flat = np.frombuffer(body, dtype="<f4")
    E = flat[: n * d].reshape(n, d).astype(np.float32)
    R_emb = flat[n * d:].reshape(n_rel, d).astype(np.float32)
    return E, R_emb, seed


def attach_checkpoint(store: TripleStore, path) -> None:
    """Load a checkpoint into the store, validating vocabulary sizes."""
    E, R_emb, seed = load_checkpoint(path)
    if E.shape[0] != store.n_entities or R_emb.shape[0] != store.n_relations:
        raise ValueError(
            f"checkpoint sized ({E.shape[0]} entities, {R_emb.shape[0]} relations) "
            f"does not match KB ({store.n_entities}, {store.n_relations})"
        )
    store.set_embeddings(E, R_emb, seed=seed)
