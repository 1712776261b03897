"""Embedding training for centroid-sketch queries.

Two tasks supervise the embeddings, both targeting the softmax
cross-entropy between the predicted answer centroid's entity scores and
a normalized true answer set:

* one-hop: a basic set X = {x | r(x,y)} is followed through its own
  relation r and must reproduce the symbolic follow result;
* intersection: two non-disjoint basic sets are averaged and must
  reproduce their exact overlap.

Gradients are derived by hand (verified against finite differences), so
the whole loop stays inspectable: no autograd framework. Training math
runs in float64; results are cast to float32 at the end. The sketch
factors on retrieved triples are exact membership weights: at training
time the sets are known, so this equals collision-free sketch lookups.
Top-k candidate selection is treated as non-differentiable; gradients
flow through the candidate softmax and the centroid sums.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .cms import WeightedSet
from .kbstore import TripleStore, init_embeddings
from .mips import top_k_from_scores
from .queryeval import SymbolicKB

_TASK_ONE_HOP = "one_hop"
_TASK_INTERSECT = "intersect"

# Hubs belonging to very many basic sets would contribute a quadratic
# number of intersection pairs; their pair lists are truncated.
_MAX_SETS_PER_ENTITY = 50


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; learning rate is likely too high."""


@dataclass(frozen=True)
class BasicSetEntry:
    """All subjects sharing one (relation, tail) property."""

    relation: int
    tail: int
    members: tuple[int, ...]


@dataclass(frozen=True)
class OneHopExample:
    members: tuple[int, ...]
    relation: int
    target: tuple[int, ...]


@dataclass(frozen=True)
class IntersectExample:
    left: tuple[int, ...]
    right: tuple[int, ...]
    target: tuple[int, ...]


@dataclass
class TrainConfig:
    """Defaults reproduce the desk-scale benchmark numbers in the README."""

    d: int = 64
    steps: int = 300
    batch_size: int = 32
    lr: float = 0.5
    momentum: float = 0.9
    seed: int = 0
    k: int = 1000
    lam: float = 1.0
    max_set_size: int = 100
    sketch_depth: int = 20
    sketch_width: int = 2000
    mode: str = "entailment"
    log_path: str | None = None

    def __post_init__(self) -> None:
        if self.d < 1 or self.steps < 0 or self.batch_size < 1:
            raise ValueError("d and batch_size must be >= 1 and steps >= 0")
        if self.sketch_depth < 1 or self.sketch_width < 1:
            raise ValueError("sketch dimensions must be >= 1")
        if self.mode not in ("entailment", "generalization"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class TrainResult:
    E: np.ndarray
    R_emb: np.ndarray
    history: list = field(repr=False)


def generate_basic_sets(triples, cap: int = 100) -> list[BasicSetEntry]:
    """One entry per (relation, tail) with 1..cap members, sorted order."""
    groups: dict[tuple[int, int], set[int]] = {}
    for r, s, o in triples:
        groups.setdefault((r, o), set()).add(s)
    return [
        BasicSetEntry(relation=r, tail=o, members=tuple(sorted(groups[(r, o)])))
        for (r, o) in sorted(groups)
        if len(groups[(r, o)]) <= cap
    ]


def build_training_pools(triples, cap: int = 100):
    """(one-hop examples, intersection examples) with symbolic targets."""
    basic = generate_basic_sets(triples, cap)
    kb = SymbolicKB(triples)
    one_hop = [
        OneHopExample(
            members=b.members,
            relation=b.relation,
            target=tuple(sorted(kb.follow(frozenset(b.members), (b.relation,)))),
        )
        for b in basic
    ]
    by_entity: dict[int, list[int]] = {}
    for idx, b in enumerate(basic):
        for x in b.members:
            by_entity.setdefault(x, []).append(idx)
    pairs: set[tuple[int, int]] = set()
    for x in sorted(by_entity):
        pairs.update(combinations(by_entity[x][:_MAX_SETS_PER_ENTITY], 2))
    intersect = [
        IntersectExample(
            left=basic[i].members,
            right=basic[j].members,
            target=tuple(sorted(set(basic[i].members) & set(basic[j].members))),
        )
        for i, j in sorted(pairs)
    ]
    return one_hop, intersect


# --- loss -------------------------------------------------------------------

def loss(a_hat: np.ndarray, target: WeightedSet, E: np.ndarray) -> float:
    """Cross entropy of softmax(E @ a_hat) against target/||target||_1.

    The softmax runs over all N entities; the sketch plays no part.
    """
    if not target:
        raise ValueError("target must be non-empty")
    ids = target.ids()
    weights = target.weights()
    value, _ = _softmax_xent(np.asarray(a_hat, dtype=np.float64),
                             ids, weights / weights.sum(),
                             np.asarray(E, dtype=np.float64))
    return value


def _softmax_xent(a_hat, target_ids, target_probs, E):
    """loss = logsumexp(z) - y.z with z = E @ a_hat; also returns p - y.

    Non-finite values are not masked here; the train loop detects them
    and aborts with diagnostics.
    """
    z = E @ a_hat
    m = z.max()
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(z - m)
        total = e.sum()
        value = (m + math.log(total)) if math.isfinite(total) else float("nan")
        if math.isfinite(value):
            value -= float(target_probs @ z[target_ids])
        g_o = e / total
    g_o[target_ids] -= target_probs
    return value, g_o


# --- per-example gradients ---------------------------------------------------

class _Ctx:
    """Mutable training context: float64 parameters, K, and grad buffers."""

    def __init__(self, E, R, rel_ids, subj_ids, obj_ids, k, lam):
        self.E = E
        self.R = R
        self.rel_ids = rel_ids
        self.subj_ids = subj_ids
        self.obj_ids = obj_ids
        self.k = k
        self.lam = lam
        self.K = np.concatenate([R[rel_ids], E[subj_ids], E[obj_ids]], axis=1)
        self.dE = np.zeros_like(E)
        self.dR = np.zeros_like(R)

    def example_loss_and_grads(self, example) -> float:
        if isinstance(example, OneHopExample):
            return self._one_hop(example)
        if isinstance(example, IntersectExample):
            return self._intersect(example)
        raise TypeError(f"not a training example: {example!r}")

    def _output_layer(self, a_hat, target):
        ids = np.fromiter(target, dtype=np.int64)
        probs = np.full(ids.size, 1.0 / ids.size)
        value, g_o = _softmax_xent(a_hat, ids, probs, self.E)
        # loss depends on E through z = E @ a_hat as well
        self.dE += np.outer(g_o, a_hat)
        g_a = self.E.T @ g_o
        return value, g_a

    def _one_hop(self, ex: OneHopExample) -> float:
        E, d, lam = self.E, self.E.shape[1], self.lam
        members = np.fromiter(ex.members, dtype=np.int64)
        a_x = E[members].sum(axis=0)
        a_r = self.R[ex.relation]
        q = np.concatenate([lam * a_r, a_x, np.zeros(d)])
        cand, cand_scores = top_k_from_scores(self.K @ q, min(self.k, self.K.shape[0]))
        shifted = np.exp(cand_scores - cand_scores.max())
        probs = shifted / shifted.sum()
        w = (
            (self.rel_ids[cand] == ex.relation).astype(np.float64)
            * np.isin(self.subj_ids[cand], members).astype(np.float64)
        )
        s = w * probs
        obj = self.obj_ids[cand]
        a_hat = s @ E[obj]
        value, g_a = self._output_layer(a_hat, ex.target)
        # through a_hat = sum_t s_t * e_obj(t)
        g_s = E[obj] @ g_a
        np.add.at(self.dE, obj, s[:, None] * g_a[None, :])
        # softmax backward over candidate scores
        g_p = w * g_s
        g_z = probs * (g_p - probs @ g_p)
        # scores z_t = q . K_t: gradient reaches q blocks and K rows
        g_q = self.K[cand].T @ g_z
        self.dR[ex.relation] += lam * g_q[:d]
        self.dE[members] += g_q[d: 2 * d]
        np.add.at(self.dR, self.rel_ids[cand], g_z[:, None] * (lam * a_r)[None, :])
        np.add.at(self.dE, self.subj_ids[cand], g_z[:, None] * a_x[None, :])
        # object block of q is a constant zero: no gradient there
        return value

    def _intersect(self, ex: IntersectExample) -> float:
        E = self.E
        left = np.fromiter(ex.left, dtype=np.int64)
        right = np.fromiter(ex.right, dtype=np.int64)
        a_hat = 0.5 * (E[left].sum(axis=0) + E[right].sum(axis=0))
        value, g_a = self._output_layer(a_hat, ex.target)
        self.dE[left] += 0.5 * g_a
        self.dE[right] += 0.5 * g_a
        return value


def loss_gradients(example, E64: np.ndarray, R64: np.ndarray, store: TripleStore,
                   k: int = 1000, lam: float = 1.0):
    """Loss and dense (dE, dR) for one example; used by gradient checks."""
    ctx = _Ctx(
        np.asarray(E64, dtype=np.float64),
        np.asarray(R64, dtype=np.float64),
        store.rel_ids, store.subj_ids, store.obj_ids, k, lam,
    )
    value = ctx.example_loss_and_grads(example)
    return value, ctx.dE, ctx.dR


# --- optimizer loop -----------------------------------------------------------

def train(store: TripleStore, cfg: TrainConfig) -> TrainResult:
    """Minibatch SGD over evenly mixed tasks; deterministic given cfg.seed.

    Starts from the store's embeddings when present (they must match
    cfg.d), otherwise from a fresh seeded uniform initialization.
    """
    one_hop, intersect = build_training_pools(store.triples, cfg.max_set_size)
    if not one_hop:
        raise ValueError("KB yields no basic sets to train on")
    if store.E is None:
        init_embeddings(store, cfg.d, cfg.seed)
    if store.d != cfg.d:
        raise ValueError(f"store embeddings have d={store.d}, config wants d={cfg.d}")
    E64 = store.E.astype(np.float64)
    R64 = store.R_emb.astype(np.float64)
    vel_E = np.zeros_like(E64)
    vel_R = np.zeros_like(R64)
    rng = np.random.default_rng(cfg.seed)
    n_one = cfg.batch_size - cfg.batch_size // 2 if intersect else cfg.batch_size
    n_int = cfg.batch_size - n_one
    history: list[dict] = []
    log_fh = open(cfg.log_path, "w", encoding="utf-8") if cfg.log_path else None
    try:
        for step in range(cfg.steps):
            ctx = _Ctx(E64, R64, store.rel_ids, store.subj_ids, store.obj_ids,
                       cfg.k, cfg.lam)
            batch = [one_hop[i] for i in rng.integers(0, len(one_hop), n_one)]
            if n_int:
                batch += [intersect[i] for i in rng.integers(0, len(intersect), n_int)]
            task_sums = {_TASK_ONE_HOP: [0.0, 0], _TASK_INTERSECT: [0.0, 0]}
            for ex in batch:
                value = ctx.example_loss_and_grads(ex)
                task = _TASK_ONE_HOP if isinstance(ex, OneHopExample) else _TASK_INTERSECT
                task_sums[task][0] += value
                task_sums[task][1] += 1
            total = sum(v for v, _ in task_sums.values())
            if not math.isfinite(total):
                raise TrainingDivergedError(
                    f"step {step}: batch loss {total}; lr={cfg.lr}, batch={cfg.batch_size}"
                )
            scale = 1.0 / cfg.batch_size
            if cfg.momentum:
                vel_E *= cfg.momentum
                vel_E += ctx.dE * scale
                vel_R *= cfg.momentum
                vel_R += ctx.dR * scale
                E64 -= cfg.lr * vel_E
                R64 -= cfg.lr * vel_R
            else:
                E64 -= cfg.lr * scale * ctx.dE
                R64 -= cfg.lr * scale * ctx.dR
            for task, (val, count) in task_sums.items():
                if count:
                    record = {"step": step, "task": task, "loss": val / count}
                    history.append(record)
                    if log_fh:
                        log_fh.write(json.dumps(record) + "\n")
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(E=E64.astype(np.float32), R_emb=R64.astype(np.float32), history=history)
