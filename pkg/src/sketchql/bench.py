"""Benchmark harness: synthetic KBs, train/test splits, template query
generation, rank metrics, and full evaluation runs.

The synthetic generator produces a typed KB: entities belong to latent
clusters, each relation connects one cluster to another, and subjects and
objects are drawn with Zipfian popularity. That gives the embedding
trainer real structure to compress while staying desk-sized.

Two regimes are supported. Entailment trains on the full KB and scores
answers that are logically entailed; generalization holds out a fraction
of triples, trains on the rest, evaluates with a vacuous final sketch,
and scores against gold computed on the full KB.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .kbstore import KBSplit, TripleStore, Vocab, build_triple_matrix
from .queryeval import (
    BasicSet,
    Follow,
    Intersect,
    QueryNode,
    RelSet,
    SymbolicKB,
    Union,
    evaluate,
    ranked,
    symbolic_evaluate,
)
from .relops import Engine
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)

TEMPLATES = ("1p", "2p", "3p", "2i", "3i", "ip", "pi", "2u", "up")
HITS_LEVELS = (1, 3, 10)


@dataclass
class BenchConfig:
    mode: str = "entailment"
    queries_per_template: int = 50
    seed: int = 0
    holdout_fraction: float = 0.1
    reject: str = "superset"  # generalization rejection: superset | disjoint
    filter_known: bool = False
    n_entities: int = 1000
    n_relations: int = 25
    n_triples: int = 5000
    n_types: int = 10
    zipf_a: float = 1.1
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        if self.mode not in ("entailment", "generalization"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.reject not in ("superset", "disjoint"):
            raise ValueError(f"unknown rejection rule {self.reject!r}")
        if self.mode == "generalization" and not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("generalization mode needs holdout_fraction in (0,1)")


# --- synthetic KB -------------------------------------------------------------

def synthetic_kb(n_entities: int = 1000, n_relations: int = 25, n_triples: int = 5000,
                 n_types: int = 10, seed: int = 0, zipf_a: float = 1.1) -> TripleStore:
    """Typed random KB with Zipfian entity popularity; deterministic."""
    if n_types < 1 or n_entities < n_types:
        raise ValueError("need at least one entity per type")
    rng = np.random.default_rng(seed)
    type_of = rng.integers(0, n_types, size=n_entities)
    # ensure no empty cluster
    type_of[:n_types] = np.arange(n_types)
    members = [np.flatnonzero(type_of == t) for t in range(n_types)]
    src_type = rng.integers(0, n_types, size=n_relations)
    dst_type = rng.integers(0, n_types, size=n_relations)

    def popularity(ids):
        ranks = rng.permutation(len(ids)) + 1
        w = 1.0 / ranks**zipf_a
        return w / w.sum()

    src_p = [popularity(members[t]) for t in range(n_types)]
    dst_p = [popularity(members[t]) for t in range(n_types)]
    triples: set[tuple[int, int, int]] = set()
    attempts = 0
    while len(triples) < n_triples and attempts < 20 * n_triples:
        attempts += 1
        r = int(rng.integers(0, n_relations))
        s = int(rng.choice(members[src_type[r]], p=src_p[src_type[r]]))
        o = int(rng.choice(members[dst_type[r]], p=dst_p[dst_type[r]]))
        triples.add((r, s, o))
    if len(triples) < n_triples:
        log.warning("synthetic KB saturated at %d of %d requested triples",
                    len(triples), n_triples)
    entities = Vocab(f"e{i}" for i in range(n_entities))
    relations = Vocab(f"r{j}" for j in range(n_relations))
    return TripleStore(entities, relations, sorted(triples))


def write_kb_file(store: TripleStore, path) -> None:
    """Dump triples as subject<TAB>relation<TAB>object lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for r, s, o in store.triples:
            fh.write(f"{store.entities.name_of(s)}\t{store.relations.name_of(r)}\t"
                     f"{store.entities.name_of(o)}\n")


# --- splits -------------------------------------------------------------------

def make_splits(store: TripleStore, holdout_fraction: float, seed: int) -> KBSplit:
    """Seeded uniform triple holdout; holdout_fraction 0 keeps everything."""
    if not 0.0 <= holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must be in [0,1), got {holdout_fraction}")
    triples = store.triples
    n_hold = int(round(holdout_fraction * len(triples)))
    if n_hold == 0:
        return KBSplit(train_triples=list(triples), full_triples=list(triples))
    rng = np.random.default_rng(seed)
    held = set(rng.permutation(len(triples))[:n_hold].tolist())
    train_triples = [t for i, t in enumerate(triples) if i not in held]
    covered = {s for _, s, _ in train_triples} | {o for _, _, o in train_triples}
    full_cover = {s for _, s, _ in triples} | {o for _, _, o in triples}
    orphaned = full_cover - covered
    if orphaned:
        log.warning("%d entities lost all training triples in the split", len(orphaned))
    return KBSplit(train_triples=train_triples, full_triples=list(triples))


def train_store_of(store: TripleStore, split: KBSplit) -> TripleStore:
    """A store over the same vocabularies holding only training triples."""
    return TripleStore(store.entities, store.relations, split.train_triples)


# --- query generation ----------------------------------------------------------

class _TemplateSampler:
    """Walk-based random instantiation; every draw has a non-empty answer
    on the KB it was sampled from."""

    def __init__(self, triples, rng):
        self.rng = rng
        self.triples = list(triples)
        self.kb = SymbolicKB(self.triples)
        self.out_of: dict[int, list[tuple[int, int]]] = {}
        self.into: dict[int, list[tuple[int, int]]] = {}
        for r, s, o in self.triples:
            self.out_of.setdefault(s, []).append((r, o))
            self.into.setdefault(o, []).append((r, s))
        self.branchy = sorted(o for o, pairs in self.into.items() if len(pairs) >= 2)
        self.bushier = sorted(o for o, pairs in self.into.items() if len(pairs) >= 3)

    def pick(self, seq):
        return seq[int(self.rng.integers(0, len(seq)))]

    def walk(self, length):
        r, s, o = self.pick(self.triples)
        hops = [(r, s, o)]
        for _ in range(length - 1):
            nxt = self.out_of.get(hops[-1][2])
            if not nxt:
                return None
            r2, o2 = self.pick(nxt)
            hops.append((r2, hops[-1][2], o2))
        return hops

    def sample(self, template: str) -> QueryNode | None:
        if template in ("1p", "2p", "3p"):
            hops = self.walk({"1p": 1, "2p": 2, "3p": 3}[template])
            if hops is None:
                return None
            node: QueryNode = BasicSet((hops[0][1],))
            for r, _, _ in hops:
                node = Follow(node, RelSet((r,)))
            return node
        if template in ("2i", "3i"):
            want = 2 if template == "2i" else 3
            pool = self.branchy if want == 2 else self.bushier
            if not pool:
                return None
            o = self.pick(pool)
            pairs = self.into[o]
            idx = self.rng.permutation(len(pairs))[:want]
            arms = tuple(Follow(BasicSet((pairs[i][1],)), RelSet((pairs[i][0],))) for i in idx)
            return Intersect(arms)
        if template == "ip":
            inner = self.sample("2i")
            if inner is None:
                return None
            meet = symbolic_evaluate(inner, self.kb)
            outs = [self.out_of[m] for m in sorted(meet) if m in self.out_of]
            if not outs:
                return None
            r, _ = self.pick(self.pick(outs))
            return Follow(inner, RelSet((r,)))
        if template == "pi":
            hops = self.walk(2)
            if hops is None:
                return None
            y = hops[-1][2]
            if y not in self.into:
                return None
            r3, s3 = self.pick(self.into[y])
            path = Follow(Follow(BasicSet((hops[0][1],)), RelSet((hops[0][0],))),
                          RelSet((hops[1][0],)))
            return Intersect((path, Follow(BasicSet((s3,)), RelSet((r3,)))))
        if template == "2u":
            t1, t2 = self.pick(self.triples), self.pick(self.triples)
            return Union((
                Follow(BasicSet((t1[1],)), RelSet((t1[0],))),
                Follow(BasicSet((t2[1],)), RelSet((t2[0],))),
            ))
        if template == "up":
            hops = self.walk(2)
            if hops is None:
                return None
            t2 = self.pick(self.triples)
            inner = Union((
                Follow(BasicSet((hops[0][1],)), RelSet((hops[0][0],))),
                Follow(BasicSet((t2[1],)), RelSet((t2[0],))),
            ))
            return Follow(inner, RelSet((hops[1][0],)))
        raise ValueError(f"unknown template {template!r}")


def generate_queries(split: KBSplit, template: str, n: int, seed: int,
                     mode: str = "entailment", reject: str = "superset",
                     unique: bool = True):
    """(query, gold) pairs; gold is symbolic evaluation on the FULL KB.

    Generalization mode rejects queries answerable from the training KB
    alone: under `superset` the full gold must strictly contain the
    training-KB answer; under `disjoint` the training-KB answer must be
    empty. Emits fewer than n (with a warning) when the KB cannot satisfy
    the template. unique=False allows repeated instantiations, useful on
    KBs too small to hold n distinct queries.
    """
    if template not in TEMPLATES:
        raise ValueError(f"unknown template {template!r}")
    rng = np.random.default_rng(seed)
    sampler = _TemplateSampler(split.full_triples, rng)
    full_kb = SymbolicKB(split.full_triples)
    train_kb = SymbolicKB(split.train_triples)
    out: list[tuple[QueryNode, frozenset]] = []
    seen: set[QueryNode] = set()
    attempts, max_attempts = 0, max(500, 300 * n)
    while len(out) < n and attempts < max_attempts:
        attempts += 1
        node = sampler.sample(template)
        if node is None or (unique and node in seen):
            continue
        gold = symbolic_evaluate(node, full_kb)
        if not gold:
            continue
        if mode == "generalization":
            known = symbolic_evaluate(node, train_kb)
            if reject == "superset" and not (known < gold):
                continue
            if reject == "disjoint" and known:
                continue
        if unique:
            seen.add(node)
        out.append((node, gold))
    if len(out) < n:
        log.warning("template %s: generated %d of %d requested queries",
                    template, len(out), n)
    return out


# --- metrics --------------------------------------------------------------------

def score_ranking(ranked_ids, gold) -> dict:
    """Hits@{1,3,10} on any gold member plus reciprocal best-gold rank."""
    best = None
    for pos, i in enumerate(ranked_ids, start=1):
        if i in gold:
            best = pos
            break
    result = {f"hits@{k}": float(best is not None and best <= k) for k in HITS_LEVELS}
    result["mrr"] = 0.0 if best is None else 1.0 / best
    return result


def random_hits_at_k(n_entities: int, gold_size: int, k: int = 3) -> float:
    """Chance a uniform random ranking hits any of `gold_size` golds in top k."""
    miss = 1.0
    for i in range(min(k, n_entities)):
        miss *= max(0, n_entities - gold_size - i) / (n_entities - i)
    return 1.0 - miss


@dataclass
class EvalReport:
    mode: str
    per_template: dict
    counts: dict
    config: dict
    wall_clock: float

    def averages(self) -> dict:
        metrics = [f"hits@{k}" for k in HITS_LEVELS] + ["mrr"]
        present = [t for t in TEMPLATES if self.counts.get(t)]
        if not present:
            return {m: 0.0 for m in metrics}
        return {m: float(np.mean([self.per_template[t][m] for t in present])) for m in metrics}

    def payload(self) -> dict:
        """Everything deterministic: excludes wall-clock."""
        return {
            "mode": self.mode,
            "per_template": self.per_template,
            "counts": self.counts,
            "config": self.config,
            "averages": self.averages(),
        }

    def to_tsv(self) -> str:
        metrics = [f"hits@{k}" for k in HITS_LEVELS] + ["mrr"]
        lines = ["template\tn\t" + "\t".join(metrics)]
        for t in TEMPLATES:
            if not self.counts.get(t):
                continue
            row = self.per_template[t]
            lines.append(f"{t}\t{self.counts[t]}\t"
                         + "\t".join(f"{100 * row[m]:.1f}" for m in metrics))
        avg = self.averages()
        lines.append("Avg\t" + str(sum(self.counts.values())) + "\t"
                     + "\t".join(f"{100 * avg[m]:.1f}" for m in metrics))
        return "\n".join(lines) + "\n"

    def pretty(self) -> str:
        present = [t for t in TEMPLATES if self.counts.get(t)]
        header = ["metric"] + present + ["Avg"]
        rows = []
        avg = self.averages()
        for m in [f"hits@{k}" for k in HITS_LEVELS] + ["mrr"]:
            cells = [f"{100 * self.per_template[t][m]:.1f}" for t in present]
            rows.append([m] + cells + [f"{100 * avg[m]:.1f}"])
        widths = [max(len(r[c]) for r in [header] + rows) for c in range(len(header))]
        fmt = "  ".join(f"{{:>{w}}}" for w in widths)
        out = [fmt.format(*header)]
        out.append(fmt.format(*["-" * w for w in widths]))
        for r in rows:
            out.append(fmt.format(*r))
        out.append(f"mode={self.mode}  queries={sum(self.counts.values())}  "
                   f"wall={self.wall_clock:.1f}s")
        return "\n".join(out)


# --- full runs --------------------------------------------------------------------

@dataclass
class RunArtifacts:
    full_store: TripleStore
    eval_store: TripleStore
    split: KBSplit
    train_history: list = field(repr=False)


def prepare_run(cfg: BenchConfig, store: TripleStore | None = None) -> RunArtifacts:
    """Build (or adopt) the KB, split it, train embeddings on the designated side."""
    full_store = store if store is not None else synthetic_kb(
        cfg.n_entities, cfg.n_relations, cfg.n_triples, cfg.n_types, cfg.seed,
        zipf_a=cfg.zipf_a)
    frac = cfg.holdout_fraction if cfg.mode == "generalization" else 0.0
    split = make_splits(full_store, frac, cfg.seed)
    eval_store = train_store_of(full_store, split)
    result = train(eval_store, cfg.train)
    eval_store.set_embeddings(result.E, result.R_emb, seed=cfg.train.seed)
    build_triple_matrix(eval_store)
    return RunArtifacts(full_store=full_store, eval_store=eval_store, split=split,
                        train_history=result.history)


def evaluate_run(cfg: BenchConfig, artifacts: RunArtifacts,
                 vacuous_sketches: bool = False,
                 templates: tuple = TEMPLATES) -> EvalReport:
    """Generate queries per template, evaluate, and aggregate rank metrics.

    vacuous_sketches disables every sketch (the ablation), not just the
    final one; generalization mode always uses a vacuous final sketch.
    """
    unknown = [t for t in templates if t not in TEMPLATES]
    if unknown:
        raise ValueError(f"unknown templates: {unknown}")
    t0 = time.perf_counter()
    store = artifacts.eval_store
    engine = Engine(store, k=cfg.train.k, lam=cfg.train.lam,
                    sketch_depth=cfg.train.sketch_depth,
                    sketch_width=cfg.train.sketch_width,
                    seed=cfg.seed, vacuous=vacuous_sketches)
    train_kb = SymbolicKB(artifacts.split.train_triples)
    final_vacuous = cfg.mode == "generalization"
    per_template: dict[str, dict] = {}
    counts: dict[str, int] = {}
    for t_index, template in enumerate(TEMPLATES):
        if template not in templates:
            continue
        queries = generate_queries(artifacts.split, template, cfg.queries_per_template,
                                   seed=cfg.seed + 1000 + t_index, mode=cfg.mode,
                                   reject=cfg.reject)
        rows = []
        for node, gold in queries:
            answer = evaluate(node, engine, final_vacuous=final_vacuous)
            order = ranked(answer)
            gold_eval = gold
            if cfg.filter_known:
                known = symbolic_evaluate(node, train_kb)
                order = [i for i in order if i not in known]
                gold_eval = gold - known
                if not gold_eval:
                    continue
            rows.append(score_ranking(order, gold_eval))
        counts[template] = len(rows)
        if rows:
            per_template[template] = {
                m: float(np.mean([r[m] for r in rows])) for m in rows[0]
            }
        else:
            per_template[template] = {f"hits@{k}": 0.0 for k in HITS_LEVELS} | {"mrr": 0.0}
    config_echo = asdict(cfg)
    config_echo["vacuous_sketches"] = vacuous_sketches
    return EvalReport(mode=cfg.mode, per_template=per_template, counts=counts,
                      config=config_echo, wall_clock=time.perf_counter() - t0)


def run_benchmark(cfg: BenchConfig, vacuous_sketches: bool = False):
    artifacts = prepare_run(cfg)
    report = evaluate_run(cfg, artifacts, vacuous_sketches=vacuous_sketches)
    return artifacts, report
