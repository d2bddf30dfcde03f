"""End-to-end CLI behaviour via click's test runner."""

import json

import pytest
from click.testing import CliRunner

from conftest import FIGURE3_INPUT, G1_SENTENCES, G1_TEXT
from syndecode.cli import main

FIGURE3_LF = ["answer", "(", "state", "(", "loc_1", "(", "city0", ")",
              ")", ")"]


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def workdir(tmp_path):
    (tmp_path / "g1.scfg").write_text(G1_TEXT)
    (tmp_path / "corpus.txt").write_text(
        "\n".join(" ".join(s) for s in G1_SENTENCES) + "\n")
    (tmp_path / "input.jsonl").write_text(json.dumps(
        {"id": 1, "utterance": list(FIGURE3_INPUT)}) + "\n")
    return tmp_path


def bigram_spec(workdir):
    return f"bigram:{workdir / 'corpus.txt'}?smoothing=none"


class TestValidate:
    def test_valid_grammar(self, runner, workdir):
        res = runner.invoke(main, ["validate", "--grammar",
                                   str(workdir / "g1.scfg")])
        assert res.exit_code == 0
        assert "ok: 4 rules" in res.output

    def test_malformed_grammar(self, runner, tmp_path):
        path = tmp_path / "bad.scfg"
        path.write_text("$r -> a ||| a\nr -> broken\n")
        res = runner.invoke(main, ["validate", "--grammar", str(path)])
        assert res.exit_code == 2
        assert "error:" in res.output
        assert "line 2" in res.output

    def test_unreachable_rule(self, runner, tmp_path):
        path = tmp_path / "unreach.scfg"
        path.write_text("start: $r\n$r -> a ||| a\n$s -> b ||| b\n")
        res = runner.invoke(main, ["validate", "--grammar", str(path)])
        assert res.exit_code == 1
        assert "unreachable: $s" in res.output

    def test_missing_file(self, runner, tmp_path):
        res = runner.invoke(main, ["validate", "--grammar",
                                   str(tmp_path / "nope.scfg")])
        assert res.exit_code == 2


class TestDecode:
    def decode(self, runner, workdir, *extra):
        out = workdir / "out.jsonl"
        res = runner.invoke(main, [
            "decode", "--grammar", str(workdir / "g1.scfg"),
            "--input", str(workdir / "input.jsonl"),
            "--output", str(out),
            "--scorer", bigram_spec(workdir), *extra])
        assert res.exit_code == 0, res.output
        return [json.loads(line) for line in out.read_text().splitlines()]

    def test_figure3_rule_mode(self, runner, workdir):
        [row] = self.decode(runner, workdir, "--mode", "rule")
        assert row["id"] == 1
        assert row["candidates"][0]["lf"] == FIGURE3_LF

    def test_figure3_word_mode(self, runner, workdir):
        [row] = self.decode(runner, workdir, "--mode", "word")
        assert row["candidates"][0]["lf"] == FIGURE3_LF

    def test_determinism_byte_identical(self, runner, workdir):
        args = ["decode", "--grammar", str(workdir / "g1.scfg"),
                "--input", str(workdir / "input.jsonl"), "--output", "-",
                "--scorer", bigram_spec(workdir), "--seed", "7"]
        a = runner.invoke(main, args)
        b = runner.invoke(main, args)
        assert a.exit_code == b.exit_code == 0
        assert a.output_bytes == b.output_bytes

    def test_jobs_preserve_input_order(self, runner, workdir):
        lines = [json.dumps({"id": i, "utterance": list(FIGURE3_INPUT)})
                 for i in range(8)]
        (workdir / "input.jsonl").write_text("\n".join(lines) + "\n")
        rows = self.decode(runner, workdir, "--jobs", "4")
        assert [r["id"] for r in rows] == list(range(8))

    def test_unparseable_grammar_exits_before_decoding(self, runner,
                                                       workdir):
        (workdir / "bad.scfg").write_text("not a grammar\n")
        res = runner.invoke(main, [
            "decode", "--grammar", str(workdir / "bad.scfg"),
            "--input", str(workdir / "input.jsonl")])
        assert res.exit_code == 2
        assert "error:" in res.output

    def test_word_mode_conflict_fails_cleanly(self, runner, workdir):
        (workdir / "pal.scfg").write_text(
            "$r -> a $r a ||| f ( $r )\n$r -> a ||| a\n")
        res = runner.invoke(main, [
            "decode", "--grammar", str(workdir / "pal.scfg"),
            "--input", str(workdir / "input.jsonl"), "--mode", "word"])
        assert res.exit_code == 1
        assert "word-level decoding unavailable" in res.output

    def test_bad_scorer_spec(self, runner, workdir):
        res = runner.invoke(main, [
            "decode", "--grammar", str(workdir / "g1.scfg"),
            "--input", str(workdir / "input.jsonl"),
            "--scorer", "nonsense"])
        assert res.exit_code == 2

    def test_rerank_requires_model(self, runner, workdir):
        res = runner.invoke(main, [
            "decode", "--grammar", str(workdir / "g1.scfg"),
            "--input", str(workdir / "input.jsonl"), "--rerank"])
        assert res.exit_code == 2
        assert "--align-model" in res.output

    def test_rerank_adds_components(self, runner, workdir):
        pairs = workdir / "pairs.jsonl"
        pairs.write_text("".join(
            json.dumps({"x": list(s), "c": list(s)}) + "\n"
            for s in G1_SENTENCES))
        model = workdir / "align.json"
        res = runner.invoke(main, ["train-align", "--pairs", str(pairs),
                                   "--epochs", "2", "--output", str(model)])
        assert res.exit_code == 0, res.output
        assert "log-likelihood" in res.output
        [row] = self.decode(runner, workdir, "--rerank", "--align-model",
                            str(model))
        top = row["candidates"][0]
        assert {"logp", "rec", "asso", "total"} <= set(top)
        assert top["total"] == pytest.approx(
            top["logp"] + top["rec"] + top["asso"])

    def test_trace_output(self, runner, workdir):
        trace = workdir / "trace.jsonl"
        self.decode(runner, workdir, "--trace", str(trace))
        events = [json.loads(l) for l in trace.read_text().splitlines()]
        assert events and all("beam" in e for e in events)

    def test_config_file_with_flag_priority(self, runner, workdir):
        cfg = workdir / "cfg.toml"
        cfg.write_text('[decode]\nn_best = 1\nbeam = 5\n')
        rows = self.decode(runner, workdir, "--config", str(cfg))
        assert len(rows[0]["candidates"]) == 1
        rows = self.decode(runner, workdir, "--config", str(cfg),
                           "--n-best", "2")
        assert len(rows[0]["candidates"]) == 2

    def test_unknown_config_key(self, runner, workdir):
        cfg = workdir / "cfg.toml"
        cfg.write_text('[decode]\nbogus = 1\n')
        res = runner.invoke(main, [
            "decode", "--grammar", str(workdir / "g1.scfg"),
            "--input", str(workdir / "input.jsonl"),
            "--config", str(cfg)])
        assert res.exit_code == 2
        assert "unknown config key" in res.output


class TestEval:
    def write_files(self, tmp_path, candidates, gold_lf):
        preds = tmp_path / "preds.jsonl"
        preds.write_text(json.dumps(
            {"id": 1, "candidates": candidates}) + "\n")
        gold = tmp_path / "gold.jsonl"
        gold.write_text(json.dumps({"id": 1, "gold_lf": gold_lf}) + "\n")
        return preds, gold

    def test_all_correct(self, runner, tmp_path):
        preds, gold = self.write_files(
            tmp_path, [{"lf": ["a"], "utterance": ["u"], "logp": -1}],
            ["a"])
        res = runner.invoke(main, ["eval", "--predictions", str(preds),
                                   "--gold", str(gold)])
        assert res.exit_code == 0
        report = json.loads(res.output)
        assert report["exact_match"] == 1.0
        assert report["oracle_at_n"] == 1.0

    def test_gold_at_rank_five(self, runner, tmp_path):
        cands = [{"lf": [f"w{i}"], "utterance": ["u"], "logp": -i}
                 for i in range(4)]
        cands.append({"lf": ["gold"], "utterance": ["u"], "logp": -9})
        preds, gold = self.write_files(tmp_path, cands, ["gold"])
        res = runner.invoke(main, ["eval", "--predictions", str(preds),
                                   "--gold", str(gold)])
        report = json.loads(res.output)
        assert report["exact_match"] == 0.0
        assert report["oracle_at_n"] == 1.0

    def test_id_mismatch(self, runner, tmp_path):
        preds, _ = self.write_files(tmp_path, [], ["a"])
        gold = tmp_path / "gold2.jsonl"
        gold.write_text(json.dumps({"id": 2, "gold_lf": ["a"]}) + "\n")
        res = runner.invoke(main, ["eval", "--predictions", str(preds),
                                   "--gold", str(gold)])
        assert res.exit_code == 1
        assert "id mismatch" in res.output

    def test_report_totals_recount(self, runner, tmp_path):
        items = []
        for i, correct in enumerate([True, False, False]):
            items.append((
                {"id": i, "candidates": [
                    {"lf": ["y"] if correct else ["n"],
                     "utterance": ["u"], "logp": -1},
                    {"lf": ["y"], "utterance": ["u"], "logp": -2}]},
                {"id": i, "gold_lf": ["y"]}))
        preds = tmp_path / "p.jsonl"
        gold = tmp_path / "g.jsonl"
        preds.write_text("".join(json.dumps(p) + "\n" for p, _ in items))
        gold.write_text("".join(json.dumps(g) + "\n" for _, g in items))
        res = runner.invoke(main, ["eval", "--predictions", str(preds),
                                   "--gold", str(gold)])
        report = json.loads(res.output)
        # independent recount
        exact = sum(p["candidates"][0]["lf"] == g["gold_lf"]
                    for p, g in items) / len(items)
        oracle = sum(any(c["lf"] == g["gold_lf"] for c in p["candidates"])
                     for p, g in items) / len(items)
        assert report["exact_match"] == pytest.approx(exact)
        assert report["oracle_at_n"] == pytest.approx(oracle)
        assert report["exact_match"] <= report["oracle_at_n"] <= 1.0


class TestSampleAndDump:
    def test_sample_writes_records(self, runner, workdir):
        out = workdir / "cus.jsonl"
        res = runner.invoke(main, [
            "sample", "--grammar", str(workdir / "g1.scfg"), "-n", "2",
            "--seed", "3", "--output", str(out)])
        assert res.exit_code == 0
        assert "wrote 2 records" in res.output
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert {tuple(r["cu"]) for r in rows} == set(G1_SENTENCES)

    def test_dump_automaton(self, runner, workdir):
        res = runner.invoke(main, ["dump-automaton", "--grammar",
                                   str(workdir / "g1.scfg")])
        assert res.exit_code == 0
        obj = json.loads(res.output)
        assert set(obj) == {"states", "action", "goto"}

    def test_dump_automaton_conflict(self, runner, workdir):
        (workdir / "pal.scfg").write_text(
            "$r -> a $r a ||| f ( $r )\n$r -> a ||| a\n")
        res = runner.invoke(main, ["dump-automaton", "--grammar",
                                   str(workdir / "pal.scfg")])
        assert res.exit_code == 1
        assert "conflict" in res.output
