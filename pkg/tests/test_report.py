import csv
import json
import math
import random
from pathlib import Path

import pytest

from recipe_eval.core import Recipe
from recipe_eval.domain import score_recipe
from recipe_eval.errors import IdMismatch, ValidationError
from recipe_eval.judge import CATEGORY_KEYS, JudgeAggregate
from recipe_eval.ngram import LogProbTrace
from recipe_eval.report import (
    DOMAIN_KEYS,
    NGRAM_KEYS,
    EvaluationReport,
    GeneratedRecipe,
    RunManifest,
    evaluate,
    format_value,
    radar_points,
    radar_rows,
    radar_svg,
    read_table_csv,
    render_table,
    split_steps,
    write_rows_csv,
)

FIXTURES = Path(__file__).parent / "fixtures"
WORDS = "flour sugar butter eggs milk salt onion garlic pepper oil rice beans chicken basil lemon".split()
VERBS = "mix stir bake chop whisk boil fry simmer pour add".split()


def make_recipe(rng, i):
    ings = rng.sample(WORDS, rng.randint(2, 5))
    steps = [f"{rng.choice(VERBS)} the {rng.choice(ings)} for {rng.randint(1, 30)} minutes"
             for _ in range(rng.randint(1, 5))]
    return Recipe.from_raw(f"dish {i}", [f"1 cup {w}" for w in ings], steps, id=f"r{i}")


def corpus(n, seed=0):
    rng = random.Random(seed)
    refs = {f"r{i}": make_recipe(rng, i) for i in range(n)}
    gens = {}
    for rid, r in refs.items():
        steps = list(r.steps)
        rng.shuffle(steps)
        gens[rid] = GeneratedRecipe(rid, tuple(steps[: max(1, len(steps) - 1)]))
    return refs, gens


def test_split_steps():
    assert split_steps("Mix.\nBake.\n\n") == ["Mix.", "Bake."]
    assert split_steps("1. Mix flour. 2. Bake 20 min. 3) Cool.") == ["Mix flour.", "Bake 20 min.", "Cool."]
    assert split_steps("Mix flour. Bake it! Cool?") == ["Mix flour.", "Bake it!", "Cool?"]
    assert split_steps("  ") == []


def test_identity_corpus_scores_one():
    refs, _ = corpus(20)
    gens = {rid: GeneratedRecipe(rid, r.steps) for rid, r in refs.items()}
    rows, rep = evaluate(gens, refs)
    for k in NGRAM_KEYS:
        assert rep.ngram[k] == 1.0
    assert rep.ngram["perplexity"] is None
    assert rep.sample_count == 20


def test_aggregate_equals_column_means(tmp_path):
    refs, gens = corpus(500, seed=3)
    traces = {rid: LogProbTrace.of([-random.Random(rid).random() for _ in range(5)]) for rid in refs}
    rows, rep = evaluate(gens, refs, traces=traces)
    out = tmp_path / "rows.csv"
    write_rows_csv(rows, out)
    with open(out, newline="") as fh:
        table = list(csv.DictReader(fh))
    assert len(table) == 500 and [r["id"] for r in table] == list(refs)
    for k in NGRAM_KEYS + ("perplexity",) + DOMAIN_KEYS:
        col = [float(r[k]) for r in table]
        total = 0.0
        for v in col:  # plain left fold; compared at a tolerance, not bit-for-bit
            total += v
        expected = total / len(col)
        got = rep.ngram[k] if k in rep.ngram else rep.domain[k]
        assert abs(got - expected) <= 1e-12
    # the domain column for one row agrees with a direct call
    one = score_recipe(refs["r7"], gens["r7"].steps).as_dict()
    assert {k: float(table[7][k]) for k in DOMAIN_KEYS} == one


def test_workers_do_not_change_results():
    refs, gens = corpus(40, seed=5)
    rows1, rep1 = evaluate(gens, refs)
    rows4, rep4 = evaluate(gens, refs, workers=3)
    assert rows1 == rows4
    assert rep1.ngram == rep4.ngram and rep1.domain == rep4.domain


def test_id_mismatch_lists_both_sides():
    refs, gens = corpus(5)
    gens.pop("r1")
    gens["extra"] = GeneratedRecipe("extra", ("mix",))
    with pytest.raises(IdMismatch) as info:
        evaluate(gens, refs)
    assert info.value.missing_generated == ["r1"]
    assert info.value.missing_references == ["extra"]


def test_empty_generation_is_scored_zero():
    refs, _ = corpus(2)
    gens = {"r0": GeneratedRecipe("r0", ()), "r1": GeneratedRecipe("r1", refs["r1"].steps)}
    rows, _ = evaluate(gens, refs)
    assert rows[0]["note"] == "empty generation"
    assert all(rows[0][k] == 0.0 for k in DOMAIN_KEYS)


def test_report_round_trip():
    refs, gens = corpus(10)
    _, rep = evaluate(gens, refs, model_label="m")
    again = EvaluationReport.from_json(json.loads(json.dumps(rep.to_json())))
    assert again == rep
    with pytest.raises(ValidationError):
        EvaluationReport("m", {}, {}, 0, "h")


def test_manifest_round_trip(tmp_path):
    m = RunManifest("evaluate", {"generated": "g.jsonl"}, seed=7, mode="rag-substitution", endpoints=["x#m"])
    m.write(tmp_path / "m.json")
    assert RunManifest.read(tmp_path / "m.json") == m


@pytest.mark.parametrize("v,text", [(0.59, "0.59"), (0.329, "0.329"), (0.1, "0.10"), (1.0, "1.00"),
                                    (90.67, "90.67"), (None, "-")])
def test_format_value(v, text):
    assert format_value(v) == text


def test_published_domain_scores_render_in_column_order():
    rows = read_table_csv(FIXTURES / "published_domain_scores.csv")
    text = render_table(rows, "domain")
    header = text.splitlines()[0]
    cols = ["Ingredient Coverage", "Step Complexity", "Recipe Coherence", "Temp. and Time Spec."]
    positions = [header.index(c) for c in cols]
    assert positions == sorted(positions)
    phi2 = next(l for l in text.splitlines() if l.startswith("Phi-2 - Baseline"))
    assert phi2.split()[-4:] == ["0.59", "0.79", "0.08", "0.329"]
    as_csv = list(csv.reader(render_table(rows, "domain", fmt="csv").splitlines()))
    assert as_csv[0] == ["Model"] + cols
    assert as_csv[5] == ["Phi-2 - Baseline", "0.59", "0.79", "0.08", "0.329"]


def test_traditional_column_order():
    header = render_table([("m", {})], "traditional", fmt="csv").splitlines()[0]
    assert header == "Model,ROUGE-1,ROUGE-2,ROUGE-L,BLEU-1,BLEU-2,BLEU-3,BLEU-4,Perplexity"
    assert render_table([("m", {})], "small", fmt="csv").splitlines()[0].endswith("BLEU-3")
    with pytest.raises(ValidationError):
        render_table([], "nope")


def test_radar_regular_hexagon():
    agg = JudgeAggregate(dict.fromkeys(CATEGORY_KEYS, 3.0), 10)
    assert [l for l, _ in radar_rows(agg)] == ["Clarity", "Completeness", "Consistency", "Practicality",
                                              "Relevance", "Allergen Safety"]
    pts = radar_points([3.0] * 6)
    radii = [math.hypot(x - 160, y - 160) for x, y in pts]
    assert max(radii) - min(radii) < 1e-9 and abs(radii[0] - 72) < 1e-9
    sides = [math.dist(pts[i], pts[(i + 1) % 6]) for i in range(6)]
    assert max(sides) - min(sides) < 1e-9
    svg = radar_svg(agg, "a & b")
    assert svg.count("<polygon") == 6 and 'class="scores"' in svg and "a &amp; b" in svg
