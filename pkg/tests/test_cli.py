"""CLI behavior: subcommands, config files, exit codes, output formats."""

import json

import pytest

from sketchql.bench import synthetic_kb, write_kb_file
from sketchql.cli import run_cli
from sketchql.kbstore import load_checkpoint, load_kb
from sketchql.queryeval import read_queries


@pytest.fixture()
def kb_file(tmp_path):
    store = synthetic_kb(n_entities=60, n_relations=6, n_triples=220, n_types=3, seed=0)
    path = tmp_path / "kb.tsv"
    write_kb_file(store, path)
    return str(path)


@pytest.fixture()
def city_kb(tmp_path):
    lines = [
        "Apple_Inc\theadquartered_in\tCupertino",
        "Apple_Inc\tfounded_by\tSteve_Jobs",
        "Google\theadquartered_in\tMountain_View",
        "Cupertino\tin_state\tCalifornia",
        "Mountain_View\tin_state\tCalifornia",
    ]
    path = tmp_path / "cities.tsv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


class TestIngest:
    def test_reports_counts(self, city_kb, capsys):
        assert run_cli(["ingest", city_kb]) == 0
        out = capsys.readouterr().out
        assert "entities\t6" in out
        assert "relations\t3" in out
        assert "triples\t5" in out

    def test_add_inverses_doubles_relations(self, city_kb, capsys):
        assert run_cli(["ingest", city_kb, "--add-inverses"]) == 0
        out = capsys.readouterr().out
        assert "relations\t6" in out
        assert "triples\t10" in out

    def test_out_writes_loadable_kb(self, city_kb, tmp_path, capsys):
        out_path = tmp_path / "normalized.tsv"
        assert run_cli(["ingest", city_kb, "--out", str(out_path)]) == 0
        assert load_kb(out_path).n_triples == 5

    def test_missing_file_fails(self, tmp_path, capsys):
        assert run_cli(["ingest", str(tmp_path / "absent.tsv")]) == 1
        assert "error:" in capsys.readouterr().err


class TestSplit:
    def test_writes_partition(self, kb_file, tmp_path, capsys):
        train, held = str(tmp_path / "train.tsv"), str(tmp_path / "held.tsv")
        code = run_cli(["split", kb_file, "--fraction", "0.1",
                        "--out-train", train, "--out-heldout", held, "--seed", "1"])
        assert code == 0
        out = capsys.readouterr().out
        assert "train\t198" in out and "heldout\t22" in out
        with open(kb_file, encoding="utf-8") as fh:
            full_lines = set(fh.read().splitlines())
        with open(train, encoding="utf-8") as fh:
            train_lines = set(fh.read().splitlines())
        with open(held, encoding="utf-8") as fh:
            held_lines = set(fh.read().splitlines())
        assert train_lines | held_lines == full_lines
        assert not train_lines & held_lines


class TestTrain:
    def test_checkpoint_written(self, kb_file, tmp_path, capsys):
        ckpt = str(tmp_path / "emb.ck")
        code = run_cli(["train", kb_file, "--out", ckpt, "--d", "8", "--steps", "3",
                        "--batch-size", "4", "--k", "220", "--seed", "0"])
        assert code == 0
        store = load_kb(kb_file)
        E, R_emb, seed = load_checkpoint(ckpt)
        assert E.shape == (store.n_entities, 8)
        assert R_emb.shape == (store.n_relations, 8)
        assert seed == 0
        assert "loss\t" in capsys.readouterr().out

    def test_config_file_supplies_defaults(self, kb_file, tmp_path):
        cfg = tmp_path / "train.cfg"
        cfg.write_text("d=8\nsteps=2\nbatch-size=4\nk=220\n", encoding="utf-8")
        ckpt = str(tmp_path / "a.ck")
        assert run_cli(["train", kb_file, "--out", ckpt, "--config", str(cfg)]) == 0
        assert load_checkpoint(ckpt)[0].shape[1] == 8

    def test_explicit_flag_beats_config(self, kb_file, tmp_path):
        cfg = tmp_path / "train.cfg"
        cfg.write_text("d=8\nsteps=2\nbatch_size=4\nk=220\n", encoding="utf-8")
        ckpt = str(tmp_path / "b.ck")
        assert run_cli(["train", kb_file, "--out", ckpt, "--config", str(cfg),
                        "--d", "4"]) == 0
        assert load_checkpoint(ckpt)[0].shape[1] == 4

    def test_bad_config_line_fails(self, kb_file, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("not a pair\n", encoding="utf-8")
        assert run_cli(["train", kb_file, "--out", "x", "--config", str(cfg)]) == 2
        assert "config error" in capsys.readouterr().err


class TestGenq:
    def test_writes_parseable_queries_and_answers(self, kb_file, tmp_path, capsys):
        qf, af = str(tmp_path / "q.txt"), str(tmp_path / "a.txt")
        code = run_cli(["genq", kb_file, "--template", "1p", "--n", "5",
                        "--out", qf, "--answers", af, "--seed", "3"])
        assert code == 0
        assert "1p\t5" in capsys.readouterr().out
        store = load_kb(kb_file)
        nodes = read_queries(qf, store)
        assert len(nodes) == 5
        with open(af, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        assert len(lines) == 5 and lines[0].startswith("0\t")

    def test_all_templates(self, kb_file, tmp_path, capsys):
        qf = str(tmp_path / "q.txt")
        assert run_cli(["genq", kb_file, "--n", "2", "--out", qf]) == 0
        out = capsys.readouterr().out
        for t in ("1p", "3i", "up"):
            assert f"{t}\t2" in out
        assert len(read_queries(qf, load_kb(kb_file))) == 18

    def test_generalization_with_train_file(self, kb_file, tmp_path):
        train, held = str(tmp_path / "tr.tsv"), str(tmp_path / "he.tsv")
        run_cli(["split", kb_file, "--fraction", "0.15",
                 "--out-train", train, "--out-heldout", held])
        qf = str(tmp_path / "q.txt")
        code = run_cli(["genq", kb_file, "--train-kb", train, "--template", "1p",
                        "--n", "4", "--mode", "generalization", "--out", qf])
        assert code == 0
        assert read_queries(qf, load_kb(kb_file))

    def test_unknown_template(self, kb_file, tmp_path, capsys):
        code = run_cli(["genq", kb_file, "--template", "9p",
                        "--out", str(tmp_path / "q.txt")])
        assert code == 1
        assert "unknown template" in capsys.readouterr().err


class TestEval:
    def eval_args(self, extra=()):
        return ["eval", "--n-entities", "60", "--n-relations", "6",
                "--n-triples", "220", "--n-types", "3", "--d", "8",
                "--steps", "10", "--batch-size", "8", "--k", "220",
                "--sketch-depth", "8", "--sketch-width", "256",
                "--queries-per-template", "3", "--seed", "0", *extra]

    def test_prints_table_with_avg(self, capsys):
        assert run_cli(self.eval_args()) == 0
        out = capsys.readouterr().out
        assert "Avg" in out and "mode=entailment" in out
        for t in ("1p", "2u", "pi"):
            assert t in out

    def test_template_subset_and_artifacts(self, tmp_path, capsys):
        tsv, js = str(tmp_path / "r.tsv"), str(tmp_path / "r.json")
        code = run_cli(self.eval_args(["--templates", "1p,2i",
                                       "--tsv", tsv, "--json", js]))
        assert code == 0
        with open(tsv, encoding="utf-8") as fh:
            text = fh.read()
        assert text.splitlines()[1].startswith("1p\t")
        assert "2p\t" not in text
        payload = json.load(open(js, encoding="utf-8"))
        assert payload["counts"].keys() == {"1p", "2i"}
        assert "wall_clock" not in payload

    def test_bad_template_list(self, capsys):
        assert run_cli(self.eval_args(["--templates", "1p,zz"])) == 1
        assert "unknown templates" in capsys.readouterr().err


class TestQuery:
    def test_apple_headquarters_demo(self, city_kb, capsys):
        code = run_cli(["query", city_kb,
                        "(follow (basic e:Apple_Inc) (rel r:headquartered_in))",
                        "--localist"])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("Cupertino\t")
        assert len(lines) == 1

    def test_two_hop_state(self, city_kb, capsys):
        code = run_cli(["query", city_kb,
                        "(follow (follow (basic e:Apple_Inc) (rel r:headquartered_in))"
                        " (rel r:in_state))",
                        "--localist"])
        assert code == 0
        assert capsys.readouterr().out.splitlines()[0].startswith("California\t")

    def test_empty_result(self, city_kb, capsys):
        code = run_cli(["query", city_kb,
                        "(follow (basic e:California) (rel r:founded_by))",
                        "--localist"])
        assert code == 0
        assert "(no results)" in capsys.readouterr().out

    def test_checkpoint_path(self, city_kb, tmp_path, capsys):
        ckpt = str(tmp_path / "c.ck")
        run_cli(["train", city_kb, "--out", ckpt, "--d", "4", "--steps", "2",
                 "--batch-size", "2", "--k", "5"])
        capsys.readouterr()
        code = run_cli(["query", city_kb,
                        "(follow (basic e:Apple_Inc) (rel r:headquartered_in))",
                        "--ckpt", ckpt, "--k", "5"])
        assert code == 0

    def test_needs_embedding_source(self, city_kb, capsys):
        code = run_cli(["query", city_kb, "(basic e:Apple_Inc)"])
        assert code == 1
        assert "--ckpt or --localist" in capsys.readouterr().err

    def test_unknown_name_and_parse_error(self, city_kb, capsys):
        assert run_cli(["query", city_kb, "(basic e:Orange_Inc)", "--localist"]) == 1
        assert run_cli(["query", city_kb, "(basic", "--localist"]) == 1


class TestSketchBench:
    def test_prints_rates(self, capsys):
        code = run_cli(["sketch-bench", "--m", "10", "--nw", "64", "--nd", "8",
                        "--candidates", "50", "--trials", "40", "--seed", "0"])
        assert code == 0
        out = capsys.readouterr().out
        assert "empirical\t" in out
        assert "theoretical\t" in out
        assert "verdict\t" in out


class TestUsageErrors:
    def test_no_subcommand(self, capsys):
        assert run_cli([]) == 2
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        assert run_cli(["eval", "--zzz"]) == 2
        assert "usage" in capsys.readouterr().err

    def test_config_without_path(self, capsys):
        assert run_cli(["train", "--config"]) == 2
