"""Recipe-specific quality metrics, each scored in [0, 1].

All constants (weights, caps, lexicons, valid ranges) come from a
``MetricConfig``; the shipped one is used when none is passed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Literal, Sequence

from .config import MetricConfig, OrderingRule, default_config
from .core import TOKEN_RE, IngredientSpec, Recipe, fold, words
from .errors import EmptyIngredientList, EmptySteps


@dataclass(frozen=True)
class DomainScore:
    ingredient_coverage: float
    step_complexity: float
    recipe_coherence: float
    temp_time_spec: float

    def as_dict(self) -> dict[str, float]:
        return {
            "ingredient_coverage": self.ingredient_coverage,
            "step_complexity": self.step_complexity,
            "recipe_coherence": self.recipe_coherence,
            "temp_time_spec": self.temp_time_spec,
        }


def _clean_steps(steps: Iterable[str]) -> list[str]:
    cleaned = [s for s in steps if s and s.strip()]
    if not cleaned:
        raise EmptySteps("no non-empty steps")
    return cleaned


# ---------------------------------------------------------------------------
# Word folding


def number_key(word: str) -> str:
    """Collapse singular and plural spellings onto one key.

    ``berries``/``berry`` -> ``berri``, ``cookies``/``cookie`` -> ``cooki``,
    ``tomatoes`` -> ``tomato``, ``eggs`` -> ``egg``. Not a real lemmatizer;
    it only has to agree with itself.
    """
    n = len(word)
    if n > 4 and word.endswith("ies"):
        return word[:-2]
    if n > 3 and word.endswith("ie"):
        return word[:-1]
    if n > 2 and word.endswith("y") and word[-2] not in "aeiou":
        return word[:-1] + "i"
    if n > 4 and word.endswith(("oes", "ches", "shes", "sses", "xes", "zes")):
        return word[:-2]
    if n > 3 and word.endswith("s") and not word.endswith(("ss", "us", "is")):
        return word[:-1]
    return word


_SUFFIXES = ("ing", "ed", "es", "s")


@lru_cache(maxsize=65536)
def _lemma(token: str, lexicon: frozenset[str]) -> str | None:
    if token in lexicon:
        return token
    if "-" in token:  # "deep-fry", "stir-fried"
        return _lemma(token.rsplit("-", 1)[1], lexicon)
    for suffix in _SUFFIXES:
        if token.endswith(suffix) and len(token) > len(suffix) + 1:
            stem = token[: -len(suffix)]
            candidates = [stem, stem + "e"]
            if len(stem) > 2 and stem[-1] == stem[-2]:
                candidates.append(stem[:-1])  # chopped, stirring
            if stem.endswith("i"):
                candidates.append(stem[:-1] + "y")  # fried, fries
            for c in candidates:
                if c in lexicon:
                    return c
    return None


def verb_lemma(token: str, config: MetricConfig | None = None) -> str | None:
    """Base form of ``token`` if it is a known cooking verb, else None."""
    config = config or default_config()
    return _lemma(token, _verbs(config))


@lru_cache(maxsize=16)
def _verbs(config: MetricConfig) -> frozenset[str]:
    return config.all_verbs


# ---------------------------------------------------------------------------
# Ingredient coverage


def ingredient_keys(spec: IngredientSpec, min_len: int = 4) -> set[str]:
    """Keys under which an ingredient counts as mentioned."""
    keys = {number_key(spec.head_noun)}
    keys.update(number_key(t) for t in spec.name_tokens if len(t) >= min_len)
    return keys


def ingredient_coverage(
    r: Recipe | Sequence[IngredientSpec],
    generated_steps: Iterable[str],
    config: MetricConfig | None = None,
) -> float:
    """Share of the input ingredients mentioned anywhere in the generated steps."""
    config = config or default_config()
    ingredients = r.ingredients if isinstance(r, Recipe) else tuple(r)
    if not ingredients:
        raise EmptyIngredientList("recipe has no ingredients")
    mentioned = {number_key(t) for step in generated_steps for t in words(step)}
    present = sum(1 for spec in ingredients if ingredient_keys(spec, config.min_token_length) & mentioned)
    return present / len(ingredients)


# ---------------------------------------------------------------------------
# Parameter extraction

_NUM = r"\d+(?:\.\d+)?"
_TEMP_RE = re.compile(
    rf"""(?P<v1>{_NUM})\s*(?:°|º|degrees?\b|deg\b\.?)\s*(?:(?P<u1>fahrenheit|celsius|f|c)\b)?
       | (?P<v2>{_NUM})\s*(?P<u2>fahrenheit|celsius)\b
       | (?P<v3>{_NUM})\s?(?P<u3>f|c)\b""",
    re.VERBOSE,
)
_DURATION_RE = re.compile(
    rf"""(?:{_NUM}\s*(?:-|–|to|or)\s*)?(?P<v>{_NUM}(?:\s+\d+/\d+|/\d+)?)\s*
         (?P<u>minutes?|mins?|hours?|hrs?|seconds?|secs?)\b""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class CookParam:
    kind: Literal["temperature", "duration"]
    value: float
    unit: Literal["F", "C", "minutes", "hours"]
    method_context: str | None = None
    valid: bool = False
    position: int = 0


def _temperatures(text: str, config: MetricConfig) -> list[tuple[int, float, str]]:
    out = []
    for m in _TEMP_RE.finditer(text):
        value = float(m.group("v1") or m.group("v2") or m.group("v3"))
        unit = m.group("u1") or m.group("u2") or m.group("u3")
        if m.group("v3") is not None and value < config.bare_letter_min:
            continue  # "2 c flour" is two cups
        if unit is None:
            unit = "f" if value > config.bare_degrees_f_above else "c"
        out.append((m.start(), value, "F" if unit.startswith("f") else "C"))
    return out


def _durations(text: str) -> list[tuple[int, float, str]]:
    out = []
    for m in _DURATION_RE.finditer(text):
        value = _number(m.group("v"))
        if value is None:
            continue
        unit = m.group("u")
        if unit.startswith("h"):
            out.append((m.start("v"), value, "hours"))
        elif unit.startswith("s"):
            out.append((m.start("v"), value / 60, "minutes"))
        else:
            out.append((m.start("v"), value, "minutes"))
    return out


def _number(text: str) -> float | None:
    whole, _, frac = text.partition("/")
    if not frac:
        return float(text)
    parts = whole.split()
    try:
        if int(frac) == 0:
            return None
        if len(parts) == 2:
            return int(parts[0]) + int(parts[1]) / int(frac)
        return int(parts[0]) / int(frac)
    except (OverflowError, ValueError):  # absurdly long digit runs
        return None


def _method(verb: str | None, config: MetricConfig) -> str | None:
    if verb is None:
        return None
    if verb in config.baking_verbs:
        return "baking"
    if verb in config.frying_verbs:
        return "frying"
    if verb in config.boiling_verbs:
        return "boiling"
    return verb


def _in(value: float, bounds: tuple[float, float]) -> bool:
    return bounds[0] <= value <= bounds[1]


def _is_valid(kind: str, value: float, unit: str, method: str | None, config: MetricConfig) -> bool:
    r = config.ranges
    if kind == "temperature":
        scale = unit.lower()
        table = method if method in ("baking", "frying") else "generic_temp"
        return _in(value, r[f"{table}_{scale}"])
    minutes = value * 60 if unit == "hours" else value
    return _in(minutes, r["boiling_minutes" if method == "boiling" else "generic_minutes"])


def _method_verbs_at(folded: str, config: MetricConfig) -> list[tuple[int, str]]:
    verbs = _verbs(config)
    methods = config.heat_verbs | config.baking_verbs | config.frying_verbs | config.boiling_verbs
    found = []
    for m in TOKEN_RE.finditer(folded):
        lemma = _lemma(m.group(), verbs)
        if lemma in methods:
            found.append((m.start(), lemma))
    return found


def extract_params(step: str, config: MetricConfig | None = None) -> list[CookParam]:
    """Temperatures and durations in one step, each tagged with the nearest
    preceding heat verb (or the step's first heat verb) and validated."""
    config = config or default_config()
    text = fold(step)
    heat = _method_verbs_at(text, config)
    raw = [(pos, v, u, "temperature") for pos, v, u in _temperatures(text, config)]
    raw += [(pos, v, u, "duration") for pos, v, u in _durations(text)]
    params = []
    for pos, value, unit, kind in sorted(raw):
        before = [verb for at, verb in heat if at < pos]
        verb = before[-1] if before else (heat[0][1] if heat else None)
        method = _method(verb, config)
        params.append(
            CookParam(
                kind=kind,
                value=value,
                unit=unit,
                method_context=verb,
                valid=_is_valid(kind, value, unit, method, config),
                position=pos,
            )
        )
    return params


@lru_cache(maxsize=8)
def _measure_re(units: tuple[str, ...]) -> re.Pattern:
    alternatives = "|".join(re.escape(u) for u in sorted(units, key=len, reverse=True))
    return re.compile(rf"\d+(?:[./]\d+)?\s*(?:{alternatives})\b")


def has_parameter(step: str, config: MetricConfig | None = None) -> bool:
    """True when the step carries any number followed by a unit."""
    config = config or default_config()
    if extract_params(step, config):
        return True
    units = tuple(sorted(set(config.units) | set(config.size_units)))
    return _measure_re(units).search(fold(step)) is not None


# ---------------------------------------------------------------------------
# Step complexity


def step_complexity(generated_steps: Iterable[str], config: MetricConfig | None = None) -> float:
    config = config or default_config()
    steps = _clean_steps(generated_steps)
    verbs = set()
    total_tokens = 0
    for step in steps:
        toks = words(step)
        total_tokens += len(toks)
        for t in toks:
            lemma = verb_lemma(t, config)
            if lemma in config.cooking_verbs:
                verbs.add(lemma)
    mean_len = total_tokens / len(steps)
    density = sum(1 for s in steps if has_parameter(s, config)) / len(steps)
    return (
        config.verb_weight * min(1.0, len(verbs) / config.verb_cap)
        + config.length_weight * min(1.0, mean_len / config.length_cap)
        + config.param_weight * density
    )


# ---------------------------------------------------------------------------
# Coherence


@dataclass(frozen=True)
class StepGraph:
    nodes: tuple[int, ...]
    introduced: tuple[frozenset[str], ...]
    edges: tuple[tuple[int, int, str], ...]
    unresolved_refs: tuple[tuple[int, str], ...]
    total_refs: int
    rule_results: tuple[tuple[OrderingRule, bool], ...]

    @property
    def resolved_refs(self) -> int:
        return self.total_refs - len(self.unresolved_refs)

    @property
    def reference_ratio(self) -> float:
        return 1.0 if self.total_refs == 0 else self.resolved_refs / self.total_refs

    @property
    def ordering_ratio(self) -> float:
        if not self.rule_results:
            return 1.0
        return sum(ok for _, ok in self.rule_results) / len(self.rule_results)


def build_step_graph(
    steps: Sequence[str],
    ingredients: Sequence[IngredientSpec] = (),
    config: MetricConfig | None = None,
) -> StepGraph:
    config = config or default_config()
    verbs = _verbs(config)
    artifacts = {number_key(e): e for e in config.entities}
    pantry: dict[str, str] = {}
    for spec in ingredients:
        pantry.setdefault(number_key(spec.head_noun), spec.head_noun)

    introduced_at: dict[str, int] = {}
    introduced: list[frozenset[str]] = []
    edges: list[tuple[int, int, str]] = []
    unresolved: list[tuple[int, str]] = []
    total_refs = 0
    verb_positions: dict[str, int] = {}
    offset = 0

    for i, step in enumerate(steps):
        toks = words(step)
        lemmas = [_lemma(t, verbs) for t in toks]
        for j, lemma in enumerate(lemmas):
            if lemma is not None:
                verb_positions.setdefault(lemma, offset + j)
        offset += len(toks)
        produces = any(l in config.producer_verbs for l in lemmas)
        combines = any(l in config.combining_verbs for l in lemmas)

        new: set[str] = set()
        for j, tok in enumerate(toks):
            key = number_key(tok)
            if key in artifacts:
                entity, is_ingredient = artifacts[key], False
            elif key in pantry:
                entity, is_ingredient = pantry[key], True
            else:
                continue
            total_refs += 1
            if entity in new:
                continue
            if entity in introduced_at:
                edges.append((introduced_at[entity], i, entity))
                continue
            window = toks[max(0, j - config.determiner_window) : j]
            if is_ingredient or produces or any(w in config.determiners for w in window):
                new.add(entity)
            else:
                unresolved.append((i, entity))
        if combines:
            new.update(config.combined_products)
        for entity in new:
            introduced_at[entity] = i
        introduced.append(frozenset(new))

    rule_results = []
    for rule in config.ordering_rules:
        before, after = verb_positions.get(rule.before), verb_positions.get(rule.after)
        if after is None or (before is None and not rule.required):
            continue
        rule_results.append((rule, before is not None and before < after))

    return StepGraph(
        nodes=tuple(range(len(steps))),
        introduced=tuple(introduced),
        edges=tuple(edges),
        unresolved_refs=tuple(unresolved),
        total_refs=total_refs,
        rule_results=tuple(rule_results),
    )


def recipe_coherence(
    generated_steps: Iterable[str],
    ingredients: Sequence[IngredientSpec] = (),
    config: MetricConfig | None = None,
) -> float:
    """0.7 * resolved-reference ratio + 0.3 * satisfied-ordering-rule ratio
    (weights from config); empty ratios count as 1."""
    config = config or default_config()
    steps = _clean_steps(generated_steps)
    g = build_step_graph(steps, ingredients, config)
    return config.reference_weight * g.reference_ratio + config.ordering_weight * g.ordering_ratio


# ---------------------------------------------------------------------------
# Temperature / time specification


@dataclass(frozen=True)
class TempTimeResult:
    score: float
    validity: float
    completeness: float
    params: tuple[CookParam, ...]
    heat_steps: int
    covered_heat_steps: int
    vacuous: bool


def temp_time_details(generated_steps: Iterable[str], config: MetricConfig | None = None) -> TempTimeResult:
    config = config or default_config()
    steps = _clean_steps(generated_steps)
    params: list[CookParam] = []
    heat_steps = covered = 0
    for step in steps:
        found = extract_params(step, config)
        params.extend(found)
        if any(v in config.heat_verbs for _, v in _method_verbs_at(fold(step), config)):
            heat_steps += 1
            covered += bool(found)
    validity = sum(p.valid for p in params) / len(params) if params else 1.0
    completeness = covered / heat_steps if heat_steps else 1.0
    return TempTimeResult(
        score=validity * completeness,
        validity=validity,
        completeness=completeness,
        params=tuple(params),
        heat_steps=heat_steps,
        covered_heat_steps=covered,
        vacuous=not params and not heat_steps,
    )


def temp_time_spec(generated_steps: Iterable[str], config: MetricConfig | None = None) -> float:
    return temp_time_details(generated_steps, config).score


def score_recipe(
    r: Recipe,
    generated_steps: Sequence[str],
    config: MetricConfig | None = None,
) -> DomainScore:
    config = config or default_config()
    steps = _clean_steps(generated_steps)
    return DomainScore(
        ingredient_coverage=ingredient_coverage(r, steps, config),
        step_complexity=step_complexity(steps, config),
        recipe_coherence=recipe_coherence(steps, r.ingredients, config),
        temp_time_spec=temp_time_spec(steps, config),
    )
