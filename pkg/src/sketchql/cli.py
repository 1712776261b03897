"""Command-line interface.

Subcommands: ingest, split, train, genq, eval, query, sketch-bench. Every
random choice is controlled by --seed, so any command line reproduces its
output exactly. An optional key=value config file supplies flag defaults
(command-line flags win); keys use the flag names with '-' or '_'.
"""

from __future__ import annotations

import argparse
import json
import sys

from .bench import (
    TEMPLATES,
    BenchConfig,
    evaluate_run,
    generate_queries,
    make_splits,
    prepare_run,
    synthetic_kb,
    write_kb_file,
)
from .cms import recovery_failure_rate
from .kbstore import (
    KBParseError,
    KBSplit,
    TripleStore,
    add_inverse_relations,
    attach_checkpoint,
    build_triple_matrix,
    load_kb,
    save_checkpoint,
)
from .queryeval import (
    QueryParseError,
    evaluate,
    localist_embeddings,
    parse_query,
    ranked,
    write_answers,
    write_queries,
)
from .relops import Engine
from .trainer import TrainConfig, TrainingDivergedError, train


def _read_config(path) -> dict[str, str]:
    """key=value lines; blank lines and # comments ignored."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip().replace("_", "-")] = value.strip()
    return values


def _config_argv(values: dict[str, str]) -> list[str]:
    """Render config entries as flags; booleans become bare switches."""
    out: list[str] = []
    for key, value in values.items():
        if value.lower() in ("true", "yes", "1") and key in _SWITCHES:
            out.append(f"--{key}")
        elif value.lower() in ("false", "no", "0") and key in _SWITCHES:
            continue
        else:
            out.extend([f"--{key}", value])
    return out


# flags that take no argument, for config-file rendering
_SWITCHES = {"add-inverses", "localist", "filter-known", "no-sketch", "final-vacuous"}


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=int, default=64, help="embedding dimension")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--k", type=int, default=1000, help="retrieval fan-in")
    p.add_argument("--lam", type=float, default=1.0, help="relation block scale")
    p.add_argument("--max-set-size", type=int, default=100)
    p.add_argument("--sketch-depth", type=int, default=20)
    p.add_argument("--sketch-width", type=int, default=2000)
    p.add_argument("--train-log", default=None, help="JSONL loss log path")


def _train_config(args, mode: str = "entailment") -> TrainConfig:
    return TrainConfig(
        d=args.d, steps=args.steps, batch_size=args.batch_size, lr=args.lr,
        momentum=args.momentum, seed=args.seed, k=args.k, lam=args.lam,
        max_set_size=args.max_set_size, sketch_depth=args.sketch_depth,
        sketch_width=args.sketch_width, mode=mode, log_path=args.train_log,
    )


def _read_triples(path, store: TripleStore):
    """Parse a triple file against an existing store's vocabularies."""
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise KBParseError(f"{path}:{lineno}: expected subject<TAB>relation<TAB>object")
            s, r, o = (p.strip() for p in parts)
            triples.append((store.relations.id_of(r), store.entities.id_of(s),
                            store.entities.id_of(o)))
    return triples


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchql",
        description="Centroid-sketch set representations and compositional KB queries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a KB file, report counts, optionally normalize")
    p.add_argument("kb", help="subject<TAB>relation<TAB>object file")
    p.add_argument("--max-fanout", type=int, default=0,
                   help="drop (subject, relation) groups with more objects than this")
    p.add_argument("--add-inverses", action="store_true",
                   help="add r_inv(y,x) for every r(x,y)")
    p.add_argument("--out", default=None, help="write the normalized KB here")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("split", help="hold out a seeded fraction of triples")
    p.add_argument("kb")
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-heldout", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train embeddings on a KB, save a checkpoint")
    p.add_argument("kb")
    p.add_argument("--out", required=True, help="checkpoint path")
    _add_train_flags(p)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("genq", help="generate template query sets with gold answers")
    p.add_argument("kb", help="full KB file")
    p.add_argument("--train-kb", default=None,
                   help="training-split triple file (defaults to the full KB)")
    p.add_argument("--template", default="all",
                   help="one of %s or 'all'" % ",".join(TEMPLATES))
    p.add_argument("--n", type=int, default=50, help="queries per template")
    p.add_argument("--mode", choices=("entailment", "generalization"),
                   default="entailment")
    p.add_argument("--reject", choices=("superset", "disjoint"), default="superset")
    p.add_argument("--out", required=True, help="query file (one s-expression per line)")
    p.add_argument("--answers", default=None, help="gold answer file")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="full benchmark run: KB, split, train, score")
    p.add_argument("--kb", default=None,
                   help="KB file; omitted = seeded synthetic KB")
    p.add_argument("--mode", choices=("entailment", "generalization"),
                   default="entailment")
    p.add_argument("--templates", default="all", help="comma list or 'all'")
    p.add_argument("--queries-per-template", type=int, default=50)
    p.add_argument("--holdout-fraction", type=float, default=0.1)
    p.add_argument("--reject", choices=("superset", "disjoint"), default="superset")
    p.add_argument("--filter-known", action="store_true",
                   help="drop training-derivable answers from rankings and gold")
    p.add_argument("--no-sketch", action="store_true",
                   help="ablation: replace every sketch with an all-ones table")
    p.add_argument("--n-entities", type=int, default=1000)
    p.add_argument("--n-relations", type=int, default=25)
    p.add_argument("--n-triples", type=int, default=5000)
    p.add_argument("--n-types", type=int, default=10)
    _add_train_flags(p)
    p.add_argument("--tsv", default=None, help="write machine-readable report here")
    p.add_argument("--json", default=None, help="write the deterministic payload here")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("query", help="evaluate one s-expression query")
    p.add_argument("kb")
    p.add_argument("expr", help='e.g. (follow (basic e:Apple_Inc) (rel r:headquartered_in))')
    p.add_argument("--ckpt", default=None, help="embedding checkpoint")
    p.add_argument("--localist", action="store_true",
                   help="use exact one-hot embeddings instead of a checkpoint")
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--sketch-depth", type=int, default=20)
    p.add_argument("--sketch-width", type=int, default=2000)
    p.add_argument("--final-vacuous", action="store_true",
                   help="rank every retrieved entity, not just sketch members")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sketch-bench",
                       help="empirical vs theoretical sketch recovery failure rates")
    p.add_argument("--m", type=int, default=50, help="set size")
    p.add_argument("--nw", type=int, default=128, help="sketch width")
    p.add_argument("--nd", type=int, default=16, help="sketch depth")
    p.add_argument("--candidates", type=int, default=500)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)

    return parser


# --- handlers ---------------------------------------------------------------

def _cmd_ingest(args) -> int:
    store = load_kb(args.kb, max_fanout=args.max_fanout)
    if args.add_inverses:
        store = add_inverse_relations(store)
    print(f"entities\t{store.n_entities}")
    print(f"relations\t{store.n_relations}")
    print(f"triples\t{store.n_triples}")
    if args.out:
        write_kb_file(store, args.out)
        print(f"wrote\t{args.out}")
    return 0


def _cmd_split(args) -> int:
    store = load_kb(args.kb)
    split = make_splits(store, args.fraction, args.seed)
    write_kb_file(TripleStore(store.entities, store.relations, split.train_triples),
                  args.out_train)
    write_kb_file(TripleStore(store.entities, store.relations, split.held_out),
                  args.out_heldout)
    print(f"train\t{len(split.train_triples)}")
    print(f"heldout\t{len(split.held_out)}")
    return 0


def _cmd_train(args) -> int:
    store = load_kb(args.kb)
    cfg = _train_config(args)
    result = train(store, cfg)
    store.set_embeddings(result.E, result.R_emb, seed=args.seed)
    save_checkpoint(store, args.out)
    losses = [h["loss"] for h in result.history]
    if losses:
        print(f"loss\tfirst {losses[0]:.4f}\tlast {losses[-1]:.4f}")
    print(f"wrote\t{args.out}")
    return 0


def _cmd_genq(args) -> int:
    store = load_kb(args.kb)
    train_triples = (_read_triples(args.train_kb, store)
                     if args.train_kb else list(store.triples))
    split = KBSplit(train_triples=train_triples, full_triples=list(store.triples))
    wanted = TEMPLATES if args.template == "all" else (args.template,)
    for t in wanted:
        if t not in TEMPLATES:
            raise ValueError(f"unknown template {t!r}; choose from {','.join(TEMPLATES)}")
    nodes, golds = [], []
    for t_index, template in enumerate(TEMPLATES):
        if template not in wanted:
            continue
        pairs = generate_queries(split, template, args.n, seed=args.seed + t_index,
                                 mode=args.mode, reject=args.reject)
        print(f"{template}\t{len(pairs)}")
        for node, gold in pairs:
            nodes.append(node)
            golds.append(sorted(gold))
    write_queries(args.out, nodes, store)
    if args.answers:
        write_answers(args.answers, list(enumerate(golds)), store)
    return 0


def _cmd_eval(args) -> int:
    if args.templates == "all":
        templates = TEMPLATES
    else:
        templates = tuple(t.strip() for t in args.templates.split(",") if t.strip())
    cfg = BenchConfig(
        mode=args.mode, queries_per_template=args.queries_per_template,
        seed=args.seed, holdout_fraction=args.holdout_fraction, reject=args.reject,
        filter_known=args.filter_known, n_entities=args.n_entities,
        n_relations=args.n_relations, n_triples=args.n_triples, n_types=args.n_types,
        train=_train_config(args, mode=args.mode),
    )
    store = load_kb(args.kb) if args.kb else None
    artifacts = prepare_run(cfg, store=store)
    report = evaluate_run(cfg, artifacts, vacuous_sketches=args.no_sketch,
                          templates=templates)
    print(report.pretty())
    if args.tsv:
        with open(args.tsv, "w", encoding="utf-8") as fh:
            fh.write(report.to_tsv())
        print(f"wrote\t{args.tsv}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(report.payload(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote\t{args.json}")
    return 0


def _cmd_query(args) -> int:
    store = load_kb(args.kb)
    if args.localist:
        localist_embeddings(store)
        k = max(store.n_entities, store.n_triples)
    elif args.ckpt:
        attach_checkpoint(store, args.ckpt)
        build_triple_matrix(store)
        k = args.k
    else:
        raise ValueError("query needs --ckpt or --localist")
    engine = Engine(store, k=k, lam=args.lam, sketch_depth=args.sketch_depth,
                    sketch_width=args.sketch_width, seed=args.seed)
    node = parse_query(args.expr, store)
    weights = evaluate(node, engine, final_vacuous=args.final_vacuous)
    order = ranked(weights)
    if not order:
        print("(no results)")
        return 0
    for i in order[: args.top]:
        print(f"{store.entities.name_of(i)}\t{weights[i]:.6g}")
    return 0


def _cmd_sketch_bench(args) -> int:
    result = recovery_failure_rate(m=args.m, n_candidates=args.candidates,
                                   depth=args.nd, width=args.nw,
                                   trials=args.trials, seed=args.seed)
    print(f"trials\t{result['trials']}")
    print(f"failures\t{result['failures']}")
    print(f"empirical\t{result['failure_rate']:.6f}")
    print(f"theoretical\t{result['delta']:.6f}")
    print(f"bound_3sigma\t{result['bound_3sigma']:.6f}")
    verdict = "within" if result["failure_rate"] <= result["bound_3sigma"] else "above"
    print(f"verdict\t{verdict} bound")
    return 0


_HANDLERS = {
    "ingest": _cmd_ingest,
    "split": _cmd_split,
    "train": _cmd_train,
    "genq": _cmd_genq,
    "eval": _cmd_eval,
    "query": _cmd_query,
    "sketch-bench": _cmd_sketch_bench,
}


def run_cli(argv) -> int:
    argv = list(argv)
    # a config file contributes defaults: its flags are injected right
    # after the subcommand so explicit flags still override them
    if "--config" in argv:
        at = argv.index("--config")
        if at + 1 >= len(argv):
            print("--config needs a path", file=sys.stderr)
            return 2
        try:
            injected = _config_argv(_read_config(argv[at + 1]))
        except (OSError, ValueError) as e:
            print(f"config error: {e}", file=sys.stderr)
            return 2
        del argv[at : at + 2]
        argv = argv[:1] + injected + argv[1:]
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except (OSError, ValueError, KeyError, QueryParseError,
            TrainingDivergedError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
