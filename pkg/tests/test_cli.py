import csv
import hashlib
import json
import os
import subprocess
import sys

import pytest

from pdpkit.cli import main
from pdpkit.dialog import BINARY_OUTCOMES, dumps_corpus, loads_corpus
from pdpkit.ripper import RuleSet


def run(*argv):
    return main([str(a) for a in argv])


def sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def last_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


@pytest.fixture(scope="module")
def corpus_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "corpus.jsonl"
    assert run("gen-corpus", "--dialogues", 300, "--seed", 5, "--out", path) == 0
    return path


def pipeline(tmp, corpus):
    """gen -> stack -> train-pdp -> predict -> evaluate; returns output paths."""
    out = {k: tmp / name for k, name in [("stack", "stack.json"), ("pdp", "pdp.json"), ("pred", "pred.tsv"),
                                        ("slu", "slu.json"), ("report", "report"), ("rules", "rules.txt"),
                                        ("feat", "feat.jsonl")]}
    assert run("stack", "--corpus", corpus, "--out", out["stack"], "--seed", 1) == 0
    assert run("train-slu", "--corpus", corpus, "--out", out["slu"], "--seed", 1) == 0
    assert run("train-pdp", "--corpus", corpus, "--stack", out["stack"], "--slu-mode", "auto",
               "--window", "ex12", "--out", out["pdp"], "--seed", 1) == 0
    assert run("predict", "--corpus", corpus, "--model", out["pdp"], "--stack", out["stack"],
               "--out", out["pred"], "--seed", 1) == 0
    assert run("extract", "--corpus", corpus, "--window", "whole", "--out", out["feat"], "--seed", 1) == 0
    assert run("inspect-rules", "--model", out["pdp"], "--out", out["rules"]) == 0
    grid = tmp / "grid.json"
    grid.write_text(json.dumps([{"window": w, "feature_set": fs, "slu_mode": m}
                                for fs, m in (("BASELINE", "none"), ("AUTO", "none"), ("AUTO", "auto"))
                                for w in ("EX1", "EX12", "WHOLE")]))
    assert run("evaluate", "--corpus", corpus, "--grid", grid, "--out", out["report"], "--seed", 1) == 0
    return out


def test_full_pipeline_and_reproducibility(tmp_path, corpus_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = pipeline(tmp_path / "a", corpus_path)
    b = pipeline(tmp_path / "b", corpus_path)
    files = []
    for k, path in a.items():
        if k == "report":
            files += [(f"{path}{ext}", f"{b[k]}{ext}") for ext in (".json", ".txt", ".csv", ".png")]
        else:
            files.append((str(path), str(b[k])))
    for pa, pb in files:
        assert sha(pa) == sha(pb), pa
    # every artifact carries a manifest naming its inputs by digest
    man = json.loads((tmp_path / "a" / "pdp.json.manifest.json").read_text())
    assert man["command"] == "train-pdp" and man["seed"] == 1
    assert man["inputs"][str(corpus_path)] == sha(corpus_path)
    assert str(tmp_path / "a" / "pdp.json") in man["outputs"]


def test_report_shape(tmp_path, corpus_path):
    out = pipeline(tmp_path, corpus_path)
    text = (tmp_path / "report.txt").read_text().splitlines()
    assert text[0].split("\t") == ["Features used", "Exchange 1", "Exchanges 1&2", "Full dialogue"]
    assert [line.split("\t")[0] for line in text[1:4]] == ["BASELINE", "AUTO", "AUTO + auto-SLU-success"]
    rows = list(csv.DictReader(open(f"{out['report']}.csv")))
    assert len(rows) == 9
    assert {r["window"] for r in rows} == {"EX1", "EX12", "WHOLE"}
    assert (tmp_path / "report.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    record = json.loads((tmp_path / "report.json").read_text())
    assert record["reports"][1]["ttests"][0]["df"] == record["reports"][1]["n"] - 1


def test_predictions_and_ttest(tmp_path, corpus_path):
    out = pipeline(tmp_path, corpus_path)
    rows = list(csv.DictReader(open(out["pred"]), delimiter="\t"))
    assert rows and {r["predicted"] for r in rows} <= set(BINARY_OUTCOMES)
    assert run("predict", "--corpus", corpus_path, "--model", out["slu"], "--out", tmp_path / "slu.tsv",
               "--seed", 1) == 0
    assert run("evaluate", "--predictions", out["pred"], "--out", tmp_path / "scored") == 0
    assert "accuracy" in (tmp_path / "scored.txt").read_text()
    assert run("ttest", "--a", out["pred"], "--b", out["pred"], "--out", tmp_path / "t.json") == 0
    res = json.loads((tmp_path / "t.json").read_text())
    assert (res["t"], res["p"], res["df"]) == (0.0, 1.0, len(rows) - 1)


def test_inspect_rules_stdout(tmp_path, corpus_path, capsys):
    out = pipeline(tmp_path, corpus_path)
    capsys.readouterr()
    assert run("inspect-rules", "--model", out["pdp"]) == 0
    printed = capsys.readouterr().out
    assert printed == (tmp_path / "rules.txt").read_text()
    assert printed.splitlines()[-1].startswith("default ")


def test_empty_ruleset_predicts_default(tmp_path, corpus_path):
    model = tmp_path / "base.json"
    assert run("train-pdp", "--corpus", corpus_path, "--feature-set", "BASELINE", "--out", model) == 0
    rs = RuleSet.loads(model.read_text())
    assert len(rs) == 0
    assert run("predict", "--corpus", corpus_path, "--model", model, "--out", tmp_path / "p.tsv") == 0
    rows = list(csv.DictReader(open(tmp_path / "p.tsv"), delimiter="\t"))
    assert {r["predicted"] for r in rows} == {rs.default}
    assert {r["rule"] for r in rows} == {"default"}


def test_hlt_without_hand_labels(tmp_path, corpus_path, capsys):
    records = [json.loads(line) for line in corpus_path.read_text().splitlines()]
    for r in records:
        for x in r["exchanges"]:
            x.pop("hand", None)
    bare = tmp_path / "bare.jsonl"
    bare.write_text("".join(json.dumps(r) + "\n" for r in records))
    stack = tmp_path / "stack.json"
    assert run("stack", "--corpus", corpus_path, "--out", stack) == 0
    capsys.readouterr()
    code = run("train-pdp", "--corpus", bare, "--stack", stack, "--slu-mode", "hlt", "--out", tmp_path / "m.json")
    assert code != 0
    err = last_error(capsys)
    assert err["error"] == "mode-resource"
    assert not (tmp_path / "m.json").exists()


@pytest.mark.parametrize("argv,code", [
    (["train-slu", "--corpus", "/nonexistent/corpus.jsonl", "--out", "x"], "missing-file"),
    (["train-pdp", "--window", "ex7", "--corpus", "c", "--out", "x"], "usage"),
    (["gen-corpus", "--signal-strength", "2", "--out", "x"], "invalid-config"),
    (["evaluate", "--out", "x"], "usage"),
])
def test_error_lines(argv, code, capsys, tmp_path):
    argv = [str(tmp_path / a) if a == "x" else a for a in argv]
    rc = main(argv)
    assert rc != 0
    assert last_error(capsys)["error"] == code


def test_bad_corpus_format(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "terminal": "lost", "exchanges": [{}]}\n')
    assert run("train-slu", "--corpus", bad, "--out", tmp_path / "m.json") == 1
    assert last_error(capsys)["error"] == "bad-format"


def test_schema_mismatch_between_model_and_data(tmp_path, corpus_path, capsys):
    model = tmp_path / "m.json"
    assert run("train-slu", "--corpus", corpus_path, "--out", model) == 0
    rec = json.loads(model.read_text())
    rec["config"]["pipeline"]["feature_set"] = "ASR-ONLY"
    model.write_text(json.dumps(rec))
    capsys.readouterr()
    rc = run("predict", "--corpus", corpus_path, "--model", model, "--out", tmp_path / "p.tsv")
    assert rc == 1
    assert last_error(capsys)["error"] in ("schema-mismatch", "bad-format")


def test_gen_corpus_round_trip_and_determinism(tmp_path, corpus_path):
    again = tmp_path / "again.jsonl"
    assert run("gen-corpus", "--dialogues", 300, "--seed", 5, "--out", again) == 0
    assert sha(again) == sha(corpus_path)
    text = corpus_path.read_text()
    assert dumps_corpus(loads_corpus(text)) == text


def test_console_entry_point(tmp_path):
    out = tmp_path / "c.jsonl"
    proc = subprocess.run([sys.executable, "-m", "pdpkit.cli", "gen-corpus", "--dialogues", "20", "--out", str(out)],
                          capture_output=True, text=True, env={**os.environ})
    assert proc.returncode == 0, proc.stderr
    assert len(out.read_text().splitlines()) == 20
