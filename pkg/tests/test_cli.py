import json

import pytest

from conftest import NEGATION_EXR, NEGATION_TOP, NEGATION_UTTERANCE
from sgparse.cli import main
from sgparse.semtree import decouple, linearize, parse_linearized


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def jsonl(text):
    return [json.loads(x) for x in text.splitlines() if x.strip()]


@pytest.fixture
def utterances(tmp_path):
    p = tmp_path / "in.txt"
    p.write_text(f"{NEGATION_UTTERANCE}\nblah blah nothing here\n", encoding="utf-8")
    return p


def test_parse_negation_and_failure(capsys, utterances):
    code, out, _ = run(capsys, "parse", "--input", utterances, "--emit", "both")
    assert code == 0
    first, second = jsonl(out)
    assert first["exr"] == NEGATION_EXR
    assert first["top"] == NEGATION_TOP
    assert first["top_decoupled"] == linearize(decouple(parse_linearized(NEGATION_TOP, "top")))
    assert first["results"][0]["exr"] == first["exr"]
    assert second["exr"] is None and second["results"] == []


def test_parse_text_format_and_workers(capsys, utterances, tmp_path):
    code, out, _ = run(capsys, "parse", "--input", utterances, "--format", "text")
    assert code == 0 and out.splitlines() == [NEGATION_EXR, "NO_PARSE"]
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert run(capsys, "parse", "--input", utterances, "--out", a)[0] == 0
    assert run(capsys, "parse", "--input", utterances, "--out", b, "--workers", 2)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_parse_bad_grammar_exits_2(capsys, tmp_path):
    g = tmp_path / "bad.sg"
    g.write_text("def A = B\n", encoding="utf-8")
    code, _, err = run(capsys, "parse", "--grammar", g, "--input", tmp_path / "none.txt")
    assert code == 2 and err


def test_generate_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert run(capsys, "generate", "-n", 20, "--seed", 4, "--out", a)[0] == 0
    assert run(capsys, "generate", "-n", 20, "--seed", 4, "--out", b)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    rows = jsonl(a.read_text(encoding="utf-8"))
    assert len(rows) == 20 and all(r["exr"].startswith("(ORDER") for r in rows)
    s = tmp_path / "s.jsonl"
    run(capsys, "generate", "-n", 20, "--seed", 4, "--strip-order", "--out", s)
    stripped = jsonl(s.read_text(encoding="utf-8"))
    assert all(not r["exr"].startswith("(ORDER") for r in stripped)
    assert [f"(ORDER {r['exr']})" for r in stripped] == [r["exr"] for r in rows]


def test_generate_bad_n(capsys):
    assert run(capsys, "generate", "-n", 0)[0] == 2
    assert run(capsys, "generate", "-n", 3, "--mask", "bogus")[0] == 2


def test_convert_decoupled_and_labels(capsys, tmp_path):
    data = tmp_path / "d.jsonl"
    run(capsys, "generate", "-n", 30, "--seed", 1, "--out", data)
    rows = jsonl(data.read_text(encoding="utf-8"))
    code, out, _ = run(capsys, "convert", "--to", "decoupled", "--input", data)
    assert code == 0
    assert [r["top_decoupled"] for r in jsonl(out)] == [r["top_decoupled"] for r in rows]
    # decoupling a decoupled tree changes nothing
    dec = tmp_path / "dec.txt"
    dec.write_text("\n".join(r["top_decoupled"] for r in rows) + "\n", encoding="utf-8")
    code, out, _ = run(capsys, "convert", "--from", "decoupled", "--to", "decoupled", "--input", dec)
    assert out.splitlines() == [r["top_decoupled"] for r in rows]
    prefix = tmp_path / "lab"
    assert run(capsys, "convert", "--to", "labels", "--input", data, "--out", prefix)[0] == 0
    code, out, _ = run(capsys, "convert", "--from", "labels", "--to", "top", "--input", prefix)
    assert code == 0 and out.splitlines() == [r["top"] for r in rows]


def test_resolve(capsys, tmp_path):
    p = tmp_path / "pred.txt"
    p.write_text("(ORDER i want (PIZZAORDER (NUMBER an) order of one (SIZE large) pizza))\n"
                 "(ORDER (PIZZAORDER (TOPPING quux)))\n", encoding="utf-8")
    code, out, err = run(capsys, "resolve", "--input", p)
    assert code == 0
    assert out.splitlines() == ["(ORDER (PIZZAORDER (NUMBER 1) (SIZE LARGE)))", ""]
    assert "1 of 2" in err
    extra = tmp_path / "extra.tsv"
    extra.write_text("TOPPING\tquux\tQUUX\t1.0\n", encoding="utf-8")
    code, out, _ = run(capsys, "resolve", "--input", p, "--extra-entities", extra, "--format", "json")
    docs = jsonl(out)
    assert docs[1]["exr"] == "(ORDER (PIZZAORDER (NUMBER 1) (TOPPING QUUX)))"
    assert run(capsys, "resolve", "--input", p, "--catalog-dir", tmp_path / "missing")[0] == 2


def test_eval_and_subset(capsys, tmp_path):
    data = tmp_path / "d.jsonl"
    run(capsys, "generate", "-n", 10, "--seed", 2, "--out", data)
    rows = jsonl(data.read_text(encoding="utf-8"))
    pred = tmp_path / "pred.jsonl"
    pred.write_text("".join(json.dumps({"id": r["id"], "pred": r["exr"]}) + "\n" for r in rows),
                    encoding="utf-8")
    code, out, _ = run(capsys, "eval", "--pred", pred, "--gold", data)
    assert code == 0 and out.startswith("EM 1.0000 (10/10)")
    base = tmp_path / "base.txt"
    base.write_text("".join(("(ORDER)" if i < 3 else r["exr"]) + "\n" for i, r in enumerate(rows)),
                    encoding="utf-8")
    report = tmp_path / "report.json"
    code, out, _ = run(capsys, "eval", "--pred", pred, "--gold", data, "--subset-of", base,
                       "--out", report)
    doc = json.loads(report.read_text(encoding="utf-8"))
    assert doc["schema_version"] == 1 and doc["overall"]["em"] == 1.0
    assert doc["subset"]["n"] == 3 and doc["subset"]["em"] == 1.0
    assert doc["subset"]["base_em"] == pytest.approx(0.7)
    assert len(doc["records"]) == 10
    code, out, _ = run(capsys, "eval", "--pred", pred, "--gold", data, "--mode", "top")
    assert code == 0 and "EM 0.0000" in out  # EXR predictions never match TOP golds
    assert run(capsys, "eval", "--pred", tmp_path / "nope", "--gold", data)[0] == 2


def test_stats(capsys, tmp_path):
    data = tmp_path / "d.jsonl"
    data.write_text(json.dumps({"id": "0", "src": "one pizza", "exr": "(ORDER (PIZZAORDER (NUMBER 1)))"})
                    + "\nnot json\n", encoding="utf-8")
    code, out, _ = run(capsys, "stats", "--dataset", data, "--format", "json")
    assert code == 0
    s = json.loads(out)["datasets"][str(data)]
    assert (s["n_utts"], s["unique_entities"], s["avg_entities_per_utt"], s["avg_intents_per_utt"]) == \
        (1, 1, 1.0, 1.0)
    assert s["skipped"] == 1
