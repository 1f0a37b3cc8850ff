import csv
import json
from pathlib import Path

import pytest

from mock_server import MockServer, completion
from recipe_eval.cli import main
from recipe_eval.core import Recipe
from recipe_eval.corpus import write_jsonl

FIXTURES = Path(__file__).parent / "fixtures"
GOOD3 = json.dumps(dict.fromkeys(
    ["clarity", "completeness", "consistency", "practicality", "relevance", "allergen_safety"], 3))


def raw_csv(path, n):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "id", "minutes", "steps", "ingredients"])
        for i in range(n):
            w.writerow([f"dish {i}", 1000 + i, 10, repr([f"mix item{i} well", "bake 20 minutes"]),
                        repr([f"item{i}", "flour"])])
    return path


def lines(path):
    return Path(path).read_text(encoding="utf-8").splitlines()


def test_ingest_split_and_determinism(tmp_path):
    src = raw_csv(tmp_path / "raw.csv", 100)
    assert main(["ingest", str(src), "--seed", "7", "--out", str(tmp_path / "a")]) == 0
    sizes = [len(lines(tmp_path / "a" / f"{s}.jsonl")) for s in ("train", "val", "test", "eval")]
    assert sizes == [80, 10, 10, 10]
    assert lines(tmp_path / "a" / "eval.jsonl") == lines(tmp_path / "a" / "test.jsonl")
    assert main(["ingest", str(src), "--seed", "7", "--out", str(tmp_path / "b")]) == 0
    for s in ("train", "val", "test", "eval"):
        assert (tmp_path / "a" / f"{s}.jsonl").read_bytes() == (tmp_path / "b" / f"{s}.jsonl").read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["command"] == "ingest"
    assert json.loads((tmp_path / "a" / "stats.json").read_text())["n_recipes"] == 100


def test_ingest_sample(tmp_path):
    src = raw_csv(tmp_path / "raw.csv", 100)
    assert main(["ingest", str(src), "--sample", "50", "--seed", "1", "--out", str(tmp_path / "o")]) == 0
    total = sum(len(lines(tmp_path / "o" / f"{s}.jsonl")) for s in ("train", "val", "test"))
    assert total == 50


def test_stats_command(tmp_path, capsys):
    src = raw_csv(tmp_path / "raw.csv", 12)
    assert main(["stats", str(src), "--out", str(tmp_path / "s"), "--budgets", "4", "512"]) == 0
    assert "share under 512 tokens: 1.0000" in capsys.readouterr().out
    assert (tmp_path / "s" / "stats.csv").exists()


def write_pair(tmp_path, n=6):
    refs = [Recipe.from_raw(f"d{i}", ["1 cup milk", "2 eggs"], [f"whisk the eggs {i} times", "bake 20 minutes at 350F"],
                            id=f"r{i}") for i in range(n)]
    write_jsonl(refs, tmp_path / "refs.jsonl")
    with open(tmp_path / "gen.jsonl", "w") as fh:
        for r in refs:
            fh.write(json.dumps({"id": r.id, "text": "\n".join(r.steps)}) + "\n")
    return tmp_path / "gen.jsonl", tmp_path / "refs.jsonl"


def test_evaluate_identity_and_rerun_from_manifest(tmp_path):
    gen, refs = write_pair(tmp_path)
    out = tmp_path / "ev"
    assert main(["evaluate", "--generated", str(gen), "--references", str(refs), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert all(rep["ngram"][k] == 1.0 for k in ("rouge1", "rouge2", "rougeL", "bleu1", "bleu2", "bleu3", "bleu4"))
    assert len(lines(out / "per_recipe.csv")) == 7
    assert lines(out / "table.csv")[0].startswith("Model,ROUGE-1,ROUGE-2,ROUGE-L,BLEU-1")

    assert main(["evaluate", "--manifest", str(out / "manifest.json"), "--out", str(tmp_path / "again")]) == 0
    again = json.loads((tmp_path / "again" / "report.json").read_text())
    rep.pop("timestamp"), again.pop("timestamp")
    assert rep == again
    assert (out / "per_recipe.csv").read_bytes() == (tmp_path / "again" / "per_recipe.csv").read_bytes()


def test_evaluate_mismatch_exits_1(tmp_path, capsys):
    gen, refs = write_pair(tmp_path)
    with open(gen, "a") as fh:
        fh.write(json.dumps({"id": "orphan", "text": "mix"}) + "\n")
    assert main(["evaluate", "--generated", str(gen), "--references", str(refs), "--out", str(tmp_path / "x")]) == 1
    assert "orphan" in capsys.readouterr().err


def test_usage_and_io_errors_exit_1(tmp_path):
    assert main(["evaluate", "--out", str(tmp_path)]) == 1
    assert main(["stats", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1


def recipes_file(tmp_path, recipes):
    write_jsonl(recipes, tmp_path / "in.jsonl")
    return tmp_path / "in.jsonl"


def test_substitute_rag(tmp_path):
    src = recipes_file(tmp_path, [Recipe.from_raw("pancakes", ["1 cup milk", "1 cup flour"],
                                                  ["Whisk the milk into the flour."], id="p1")])
    assert main(["substitute", str(src), "--mode", "rag", "--out", str(tmp_path / "o")]) == 0
    out = lines(tmp_path / "o" / "substituted.jsonl")
    assert "(substitute for milk)" in out[0]
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["mode"] == "rag-substitution"


def test_substitute_rag_allergen_free_is_identity(tmp_path):
    src = recipes_file(tmp_path, [Recipe.from_raw("salad", ["2 tomatoes", "1 cucumber"], ["Slice and toss."], id="s")])
    assert main(["substitute", str(src), "--out", str(tmp_path / "o")]) == 0
    assert lines(tmp_path / "o" / "substituted.jsonl") == lines(src)


def test_substitute_prompt_mode(tmp_path):
    src = recipes_file(tmp_path, [Recipe.from_raw("waffles", ["milk", "flour"], [], id="w1")])
    with MockServer(lambda p, b, n: (200, completion("MOCK RECIPE"))) as srv:
        code = main(["substitute", str(src), "--mode", "prompt", "--endpoint", srv.url,
                     "--allergens", "milk,eggs", "--out", str(tmp_path / "o")])
        prompt = srv.requests[0][1]["prompt"]
    assert code == 0
    assert json.loads(lines(tmp_path / "o" / "substituted.jsonl")[0])["text"] == "MOCK RECIPE"
    assert "Substitute these allergens for other ingredients: milk, eggs" in prompt


def test_substitute_prompt_needs_endpoint(tmp_path):
    src = recipes_file(tmp_path, [Recipe.from_raw("waffles", ["milk"], [], id="w1")])
    assert main(["substitute", str(src), "--mode", "prompt", "--out", str(tmp_path / "o")]) == 1


def test_endpoint_failure_exits_2(tmp_path):
    src = recipes_file(tmp_path, [Recipe.from_raw("waffles", ["milk"], [], id="w1")])
    with MockServer(lambda p, b, n: (401, {"error": "no"})) as srv:
        assert main(["substitute", str(src), "--mode", "prompt", "--endpoint", srv.url,
                     "--out", str(tmp_path / "o")]) == 2


def test_judge_constant_threes(tmp_path):
    with open(tmp_path / "gen.jsonl", "w") as fh:
        for i in range(501):
            fh.write(json.dumps({"id": f"g{i}", "text": f"Mix batch {i} and bake."}) + "\n")
    with MockServer(lambda p, b, n: (200, completion(f"Scores: {GOOD3}"))) as srv:
        code = main(["judge", str(tmp_path / "gen.jsonl"), "--endpoint", srv.url, "--max-inflight", "8",
                     "--out", str(tmp_path / "j")])
        assert len(srv.requests) == 500
    assert code == 0
    agg = json.loads((tmp_path / "j" / "aggregate.json").read_text())
    assert agg["sample_count"] == 500 and set(agg["means"].values()) == {3.0}
    radar = list(csv.reader(lines(tmp_path / "j" / "radar.csv")))
    assert radar[0] == ["category", "value"] and len(radar) == 7
    assert [r[0] for r in radar[1:]] == ["Clarity", "Completeness", "Consistency", "Practicality",
                                         "Relevance", "Allergen Safety"]
    assert len(lines(tmp_path / "j" / "scorecards.jsonl")) == 500
    assert "<svg" in (tmp_path / "j" / "radar.svg").read_text()


def test_judge_garbage_exits_2(tmp_path):
    (tmp_path / "gen.jsonl").write_text(json.dumps({"id": "a", "text": "Mix."}) + "\n")
    with MockServer(lambda p, b, n: (200, completion("no idea"))) as srv:
        assert main(["judge", str(tmp_path / "gen.jsonl"), "--endpoint", srv.url, "--out", str(tmp_path / "j")]) == 2
        assert len(srv.requests) == 3


def test_report_from_csv(tmp_path, capsys):
    assert main(["report", "--from-csv", str(FIXTURES / "published_domain_scores.csv"), "--table", "domain"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].split("  ")[0].strip() == "Model"
    assert "0.329" in out
    assert main(["report", "--from-csv", str(FIXTURES / "published_domain_scores.csv"), "--table", "domain",
                 "--format", "csv", "--out", str(tmp_path / "t.csv")]) == 0
    assert lines(tmp_path / "t.csv")[5] == "Phi-2 - Baseline,0.59,0.79,0.08,0.329"
    assert (tmp_path / "manifest.json").exists()


def test_report_from_evaluation(tmp_path, capsys):
    gen, refs = write_pair(tmp_path)
    main(["evaluate", "--generated", str(gen), "--references", str(refs), "--label", "mine", "--out", str(tmp_path / "e")])
    capsys.readouterr()
    assert main(["report", str(tmp_path / "e" / "report.json"), "--table", "traditional"]) == 0
    row = capsys.readouterr().out.splitlines()[2]
    assert row.startswith("mine") and row.split()[1:8] == ["1.00"] * 7
