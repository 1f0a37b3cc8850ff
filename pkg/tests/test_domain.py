import math
import random
import shutil
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recipe_eval.config import DEFAULT_CONFIG_PATH, load_metric_config
from recipe_eval.core import Recipe, parse_ingredient, tokenize
from recipe_eval.domain import (
    build_step_graph,
    extract_params,
    ingredient_coverage,
    number_key,
    recipe_coherence,
    score_recipe,
    step_complexity,
    temp_time_details,
    temp_time_spec,
    verb_lemma,
)
from recipe_eval.errors import EmptyIngredientList, EmptySteps


def coverage_oracle(ingredients, steps, min_len=4):
    """Explicit token-by-token membership with the same plural folding."""
    step_tokens = [t for s in steps for t in tokenize(s).tokens]
    present = 0
    for spec in ingredients:
        candidates = [spec.head_noun] + [t for t in spec.name_tokens if len(t) >= min_len]
        found = False
        for c in candidates:
            for t in step_tokens:
                if number_key(c) == number_key(t):
                    found = True
        present += found
    return Fraction(present, len(ingredients))


def test_coverage_two_of_three():
    r = Recipe.from_raw("cake", ["flour", "sugar", "eggs"])
    steps = ["Sift the flour.", "Add sugar and stir."]
    assert coverage_oracle(r.ingredients, steps) == Fraction(2, 3)
    assert ingredient_coverage(r, steps) == pytest.approx(0.6667, abs=5e-5)
    assert ingredient_coverage(r, steps) == 2 / 3


def test_coverage_full_and_empty():
    r = Recipe.from_raw("x", ["2 cups flour", "1 tsp salt", "3 large eggs"])
    assert ingredient_coverage(r, ["2 cups flour, 1 tsp salt, 3 large eggs"]) == 1.0
    assert ingredient_coverage(r, ["preheat the oven"]) == 0.0
    with pytest.raises(EmptyIngredientList):
        ingredient_coverage(Recipe.from_raw("x", []), ["mix"])


def test_coverage_handles_forms():
    r = Recipe.from_raw("x", ["1 cup blueberries", "2 tomatoes", "1 egg", "2 cups all-purpose flour"])
    steps = ["Fold in the blueberry.", "Slice the tomato.", "Beat the eggs.", "Use all-purpose."]
    assert ingredient_coverage(r, steps) == 1.0


NOUNS = "egg eggs berry berries tomato tomatoes flour oil salt cookie cookies milk butter sugar onion onions".split()
ADJS = ["fresh", "chopped", "large", "", "ground", "all-purpose"]
FILLER = "the a and with stir bake until golden into pan".split()


def random_instance(rng):
    ingredients = []
    for _ in range(rng.randint(1, 6)):
        raw = f"{rng.randint(1, 3)} cups {rng.choice(ADJS)} {rng.choice(NOUNS)}"
        ingredients.append(parse_ingredient(raw))
    steps = [
        " ".join(rng.choice(NOUNS + FILLER + ADJS[:3]) for _ in range(rng.randint(0, 8)))
        for _ in range(rng.randint(1, 4))
    ]
    return ingredients, steps


def test_coverage_matches_oracle_on_random_instances():
    rng = random.Random(2024)
    for _ in range(500):
        ingredients, steps = random_instance(rng)
        assert ingredient_coverage(ingredients, steps) == float(coverage_oracle(ingredients, steps))


def test_step_complexity_formula_example():
    # 0.4*(1/8) + 0.3*(1/20) + 0.3*0
    assert step_complexity(["mix", "mix", "mix"]) == pytest.approx(0.065, abs=1e-15)


SATURATED = [
    f"{verb} the prepared ingredients carefully in the large bowl for 10 minutes "
    "until everything looks smooth and evenly combined together now"
    for verb in ["Mix", "Whisk", "Fold", "Stir", "Knead", "Chop", "Slice", "Bake", "Simmer"]
]


def test_step_complexity_saturates():
    assert all(len(tokenize(s)) >= 20 for s in SATURATED)
    assert step_complexity(SATURATED) == pytest.approx(1.0, abs=1e-12)


def test_step_complexity_empty():
    with pytest.raises(EmptySteps):
        step_complexity(["", "   "])
    with pytest.raises(EmptySteps):
        step_complexity([])


@pytest.mark.parametrize(
    "token, lemma",
    [("baking", "bake"), ("fried", "fry"), ("chopped", "chop"), ("stirring", "stir"), ("mixes", "mix"),
     ("deep-fry", "fry"), ("simmered", "simmer"), ("table", None), ("bed", None)],
)
def test_verb_lemma(token, lemma):
    assert verb_lemma(token) == lemma


def test_coherence_examples():
    assert recipe_coherence(["preheat oven to 350f", "bake in the oven"]) == 1.0
    g = build_step_graph(["preheat oven to 350f", "bake in the oven"])
    assert g.total_refs == 2 and g.resolved_refs == 2
    assert g.edges == ((0, 1, "oven"),)

    assert recipe_coherence(["bake the dough"]) == 0.0
    g = build_step_graph(["bake the dough"])
    assert g.unresolved_refs == ((0, "dough"),)
    assert [ok for _, ok in g.rule_results] == [False]

    assert recipe_coherence(["hello there", "nothing to see"]) == 1.0


def test_coherence_mixture_and_indefinite_article():
    steps = [
        "Combine flour and sugar in a bowl.",
        "Pour the mixture into the pan.",
        "Place in a pan and bake.",
    ]
    g = build_step_graph(steps, [parse_ingredient("flour"), parse_ingredient("sugar")])
    # "the pan" in step 1 was never introduced; "a pan" in step 2 introduces it
    assert g.unresolved_refs == ((1, "pan"),)
    assert (0, 1, "mixture") in g.edges


def test_coherence_ordering_inversion():
    good = ["Preheat the oven to 350F.", "Mix the batter.", "Bake for 20 minutes."]
    bad = [good[2], good[1], good[0]]
    assert build_step_graph(good).ordering_ratio == 1.0
    assert build_step_graph(bad).ordering_ratio == 0.0


def test_step_graph_invariants():
    rng = random.Random(7)
    words_ = "mix the dough a bowl pan oven bake preheat into pour sauce mixture heat with".split()
    for _ in range(200):
        steps = [" ".join(rng.choice(words_) for _ in range(rng.randint(1, 8))) for _ in range(rng.randint(1, 5))]
        g = build_step_graph(steps)
        for producer, consumer, entity in g.edges:
            assert producer < consumer
            assert entity in g.introduced[producer]


def test_temp_time_examples():
    res = temp_time_details(["bake at 350f for 25 minutes"])
    assert len(res.params) == 2 and all(p.valid for p in res.params)
    assert res.score == 1.0
    assert temp_time_spec(["bake at 900f"]) == 0.0
    res = temp_time_details(["mix flour and water"])
    assert res.score == 1.0 and res.vacuous


def test_temp_time_completeness():
    # two heat steps, only one carries a parameter
    res = temp_time_details(["Boil the pasta.", "Bake at 180 C for 20 minutes."])
    assert (res.heat_steps, res.covered_heat_steps) == (2, 1)
    assert res.score == 0.5


def test_param_extraction_variants():
    ps = extract_params("Preheat to 375°F (190°C), bake 9-11 minutes or 1 1/2 hours. Add 2 c flour.")
    assert [(p.kind, p.value, p.unit) for p in ps] == [
        ("temperature", 375.0, "F"),
        ("temperature", 190.0, "C"),
        ("duration", 11.0, "minutes"),
        ("duration", 1.5, "hours"),
    ]
    assert [p.kind for p in extract_params("Fry at 350 degrees Fahrenheit")] == ["temperature"]
    fry = extract_params("deep-fry at 500 F")[0]
    assert fry.method_context == "fry" and not fry.valid
    boil = extract_params("simmer for 10 hours")[0]
    assert not boil.valid  # beyond 480 minutes


@given(st.integers(200, 550))
def test_temp_time_invariant_under_scale_conversion(f):
    c = round((f - 32) * 5 / 9)
    assert temp_time_spec([f"Bake at {f}°F."]) == temp_time_spec([f"Bake at {c}°C."]) == 1.0


@given(st.integers(300, 450))
def test_frying_scale_conversion(f):
    c = round((f - 32) * 5 / 9)
    assert temp_time_spec([f"Fry at {f} F."]) == temp_time_spec([f"Fry at {c} C."]) == 1.0


step_lists = st.lists(st.text(st.characters(min_codepoint=32, max_codepoint=126), min_size=1), min_size=1, max_size=6)


@settings(max_examples=300)
@given(step_lists)
def test_scores_in_unit_interval(steps):
    r = Recipe.from_raw("x", ["flour", "2 eggs"])
    try:
        s = score_recipe(r, steps)
    except EmptySteps:
        assert all(not x.strip() for x in steps)
        return
    for v in s.as_dict().values():
        assert 0.0 <= v <= 1.0


@settings(max_examples=100)
@given(st.lists(st.sampled_from(SATURATED + ["preheat oven to 350f", "bake the dough", "mix"]), min_size=1, max_size=6),
       st.randoms())
def test_permutation_invariance(steps, rnd):
    r = Recipe.from_raw("x", ["flour", "dough"])
    shuffled = steps[:]
    rnd.shuffle(shuffled)
    assert ingredient_coverage(r, steps) == ingredient_coverage(r, shuffled)
    assert step_complexity(steps) == step_complexity(shuffled)


def test_config_is_data(tmp_path):
    for f in Path(DEFAULT_CONFIG_PATH).parent.iterdir():
        shutil.copy(f, tmp_path / f.name)
    base = load_metric_config(tmp_path / "metric_config.ini")
    assert base.config_hash == load_metric_config().config_hash

    ini = tmp_path / "metric_config.ini"
    ini.write_text(ini.read_text().replace("verb_cap = 8", "verb_cap = 1"))
    tuned = load_metric_config(ini)
    assert tuned.config_hash != base.config_hash
    assert step_complexity(["mix"], tuned) == pytest.approx(0.4 + 0.3 / 20)

    (tmp_path / "entities.txt").write_text("widget\n")
    assert load_metric_config(ini).config_hash != tuned.config_hash
