"""Six-category Likert scoring of generated recipes by a judge model."""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .client import OpenAICompatibleClient
from .errors import EmptyInput, EmptyRecipe, InvalidScorecard, UnparseableAfterRetries, ValidationError
from .prompting import PromptRequest

# ordered as they are presented in reports and radar charts
CATEGORIES: tuple[tuple[str, str], ...] = (
    ("clarity", "Instruction comprehensibility"),
    ("completeness", "Coverage of necessary steps"),
    ("consistency", "Logical flow and coherence"),
    ("practicality", "Feasibility of execution"),
    ("relevance", "Alignment with recipe goals"),
    ("allergen_safety", "Checks if allergen is substituted correctly"),
)
CATEGORY_KEYS = tuple(k for k, _ in CATEGORIES)
CATEGORY_LABELS = {
    "clarity": "Clarity",
    "completeness": "Completeness",
    "consistency": "Consistency",
    "practicality": "Practicality",
    "relevance": "Relevance",
    "allergen_safety": "Allergen Safety",
}

MAX_ATTEMPTS = 3
MAX_SAMPLES = 500
JUDGE_PARAMS = {"temperature": 0.0, "max_tokens": 200}

JUDGE_TEMPLATE = """You are judging the quality of a generated cooking recipe.
Rate the recipe on each category below using an integer from 1 (very poor) to 5 (excellent).

{categories}

Recipe name: {name}
Requested ingredients: {ingredients}
{safety}

Recipe to judge:
{recipe}

Answer with a single JSON object and nothing else, using exactly these keys: {keys}.
Each value must be an integer from 1 to 5."""

RETRY_SUFFIX = "\n\nYour previous answer could not be read. Reply with the JSON object only."


@dataclass(frozen=True)
class JudgeScorecard:
    clarity: int
    completeness: int
    consistency: int
    practicality: int
    relevance: int
    allergen_safety: int
    raw_response: str = field(default="", compare=False)
    parse_attempts: int = field(default=1, compare=False)
    id: str | None = field(default=None, compare=False)

    def __post_init__(self):
        for k in CATEGORY_KEYS:
            v = getattr(self, k)
            if isinstance(v, bool) or not isinstance(v, int) or not 1 <= v <= 5:
                raise InvalidScorecard(f"{k} must be an integer in 1..5, got {v!r}")

    def scores(self) -> dict[str, int]:
        return {k: getattr(self, k) for k in CATEGORY_KEYS}

    def to_json(self) -> dict:
        out = {"id": self.id, **self.scores()}
        out.update(raw_response=self.raw_response, parse_attempts=self.parse_attempts)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "JudgeScorecard":
        return cls(
            **{k: obj[k] for k in CATEGORY_KEYS},
            raw_response=obj.get("raw_response", ""),
            parse_attempts=obj.get("parse_attempts", 1),
            id=obj.get("id"),
        )


def build_judge_prompt(recipe_text: str, original_request: PromptRequest | None = None) -> str:
    if not recipe_text or not recipe_text.strip():
        raise EmptyRecipe("nothing to judge")
    req = original_request
    lines = "\n".join(f"- {k}: {desc}" for k, desc in CATEGORIES)
    if req is not None and req.allergens:
        safety = (
            f"Allergens to avoid: {', '.join(req.allergens)}. For allergen_safety, check that each of "
            f"these ({', '.join(req.allergens)}) was replaced by a safe substitute."
        )
    else:
        safety = "No allergens were listed; for allergen_safety, judge whether any substitutions made are correct."
    return JUDGE_TEMPLATE.format(
        categories=lines,
        name=req.name if req is not None else "(not given)",
        ingredients=", ".join(req.ingredients) if req is not None and req.ingredients else "(not given)",
        safety=safety,
        recipe=recipe_text.strip(),
        keys=", ".join(CATEGORY_KEYS),
    )


def _first_json_object(text: str) -> dict | None:
    decoder = json.JSONDecoder()
    pos = text.find("{")
    while pos != -1:
        try:
            obj, _ = decoder.raw_decode(text, pos)
        except ValueError:
            pos = text.find("{", pos + 1)
            continue
        if isinstance(obj, dict):
            return obj
        pos = text.find("{", pos + 1)
    return None


def parse_scorecard(response: str, attempts: int = 1) -> JudgeScorecard:
    """Read the first JSON object in ``response``.

    Scores must be integers 1..5 (``3.0`` is accepted as 3); anything else,
    a missing key, or no JSON at all raises ``InvalidScorecard``.
    """
    obj = _first_json_object(response or "")
    if obj is None:
        raise InvalidScorecard("no JSON object in response")
    normalized = {str(k).strip().lower().replace(" ", "_"): v for k, v in obj.items()}
    scores = {}
    for k in CATEGORY_KEYS:
        if k not in normalized:
            raise InvalidScorecard(f"missing category {k!r}")
        v = normalized[k]
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        if isinstance(v, bool) or not isinstance(v, int) or not 1 <= v <= 5:
            raise InvalidScorecard(f"{k}={v!r} is not an integer in 1..5")
        scores[k] = v
    return JudgeScorecard(**scores, raw_response=response, parse_attempts=attempts)


def judge_recipe(
    recipe_text: str,
    client: OpenAICompatibleClient,
    original_request: PromptRequest | None = None,
    id: str | None = None,
) -> JudgeScorecard:
    """One judge call per recipe, re-asking at most twice on unreadable output."""
    prompt = build_judge_prompt(recipe_text, original_request)
    last = ""
    for attempt in range(1, MAX_ATTEMPTS + 1):
        last = client.complete(prompt if attempt == 1 else prompt + RETRY_SUFFIX, JUDGE_PARAMS)
        try:
            card = parse_scorecard(last, attempt)
        except InvalidScorecard:
            continue
        return JudgeScorecard(**card.scores(), raw_response=last, parse_attempts=attempt, id=id)
    raise UnparseableAfterRetries(MAX_ATTEMPTS, last)


def judge_many(
    items: Sequence[tuple[str, str, PromptRequest | None]],
    client: OpenAICompatibleClient,
    max_inflight: int = 4,
) -> list[JudgeScorecard]:
    """``items`` are ``(id, recipe_text, request)``; output keeps their order."""
    if max_inflight < 1:
        raise ValidationError("max_inflight must be at least 1")
    with ThreadPoolExecutor(max_workers=max_inflight) as pool:
        futures = [pool.submit(judge_recipe, text, client, req, rid) for rid, text, req in items]
        return [f.result() for f in futures]


@dataclass(frozen=True)
class JudgeAggregate:
    means: dict[str, float]
    sample_count: int
    judge_model: str = ""
    prompt_hash: str = ""

    def __post_init__(self):
        if not 0 < self.sample_count <= MAX_SAMPLES:
            raise ValidationError(f"sample_count must be in 1..{MAX_SAMPLES}")

    def to_json(self) -> dict:
        return {
            "means": dict(self.means),
            "sample_count": self.sample_count,
            "judge_model": self.judge_model,
            "prompt_hash": self.prompt_hash,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "JudgeAggregate":
        return cls({k: float(obj["means"][k]) for k in CATEGORY_KEYS}, int(obj["sample_count"]),
                   obj.get("judge_model", ""), obj.get("prompt_hash", ""))


def prompts_hash(prompts: Iterable[str]) -> str:
    h = hashlib.sha256()
    for p in prompts:
        h.update(hashlib.sha256(p.encode("utf-8")).digest())
    return h.hexdigest()


def aggregate(cards: Sequence[JudgeScorecard], judge_model: str = "", prompt_hash: str = "") -> JudgeAggregate:
    if not cards:
        raise EmptyInput("no scorecards to aggregate")
    if len(cards) > MAX_SAMPLES:
        raise ValidationError(f"at most {MAX_SAMPLES} scorecards are aggregated, got {len(cards)}")
    means = {k: math.fsum(getattr(c, k) for c in cards) / len(cards) for k in CATEGORY_KEYS}
    return JudgeAggregate(means, len(cards), judge_model, prompt_hash)


def read_scorecards(path) -> list[JudgeScorecard]:
    with open(path, encoding="utf-8") as fh:
        return [JudgeScorecard.from_json(json.loads(line)) for line in fh if line.strip()]
