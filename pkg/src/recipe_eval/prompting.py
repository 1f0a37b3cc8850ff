"""Generation prompts and the calls that send them to a completion endpoint."""

from __future__ import annotations

import hashlib
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .client import OpenAICompatibleClient
from .core import render_model_input
from .errors import EmptyField, ValidationError


PLAIN = "plain"
ALLERGEN_PROMPT = "allergen_prompt"

SUBSTITUTION_TEMPLATE = (
    "You are an expert chef and recipe writer with a deep understanding of culinary techniques and food "
    "allergies. Your goal is to create a detailed and high quality recipe that uses the provided list of "
    "ingredients, while making substitutions for any allergens to ensure the recipe is safe for individuals "
    "with those allergies.\n"
    "Please follow these instructions:\n"
    "1. Create a Recipe: Write a full, detailed recipe based on the name and ingredients provided.\n"
    "2. Substitute Allergens: Some people are allergic to certain ingredients. You must avoid these allergens "
    "in the recipe and suggest substitutions from the list of safe ingredients. If the allergen is an essential "
    "part of the recipe, ensure the substitute maintains the flavor and texture as much as possible.\n"
    "3. Ensure Clarity and Detail: Provide precise instructions, including cooking methods, preparation steps, "
    "and any necessary tips. The recipe should be easy to follow for someone with basic cooking knowledge.\n"
    "Create a recipe for: {name}\n"
    "Using these ingredients: {ingredients}\n"
    "Substitute these allergens for other ingredients: {allergens}\n"
    "Recipe:"
)

_PLACEHOLDER_RE = re.compile(r"\{(name|ingredients|allergens)\}")


@dataclass(frozen=True)
class GenerationConfig:
    max_new_tokens: int = 256
    temperature: float = 0.75
    top_p: float = 0.95
    do_sample: bool = True
    no_repeat_ngram_size: int = 4
    repetition_penalty: float = 1.3

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValidationError("temperature must be positive")
        if not 0 < self.top_p <= 1:
            raise ValidationError("top_p must lie in (0, 1]")
        if self.max_new_tokens < 1:
            raise ValidationError("max_new_tokens must be at least 1")

    @classmethod
    def for_mode(cls, mode: str) -> "GenerationConfig":
        """Defaults for ``prompt`` (allergen prompt) or ``rag`` generation."""
        if mode in ("prompt", ALLERGEN_PROMPT, PLAIN):
            return cls()
        if mode == "rag":
            return cls(top_p=0.80)
        raise ValidationError(f"unknown generation mode {mode!r}")

    def request_params(self) -> dict:
        return {
            "max_tokens": self.max_new_tokens,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "do_sample": self.do_sample,
            "no_repeat_ngram_size": self.no_repeat_ngram_size,
            "repetition_penalty": self.repetition_penalty,
        }

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PromptRequest:
    mode: str
    name: str
    ingredients: tuple[str, ...]
    allergens: tuple[str, ...]
    rendered: str
    flags: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.mode == ALLERGEN_PROMPT and not self.allergens:
            raise EmptyField("allergens")
        if self.mode == PLAIN and self.allergens:
            raise ValidationError("plain prompts take no allergens")

    @property
    def prompt_hash(self) -> str:
        return hashlib.sha256(self.rendered.encode("utf-8")).hexdigest()


def _sanitize(value: str, field_name: str, flags: list[str]) -> str:
    """Collapse line breaks to spaces; they would break the one-line template slots."""
    if "\n" in value or "\r" in value:
        flags.append(f"line break removed from {field_name}")
        value = " ".join(p.strip() for p in value.splitlines() if p.strip())
    return value.strip()


def _clean_list(values: Iterable[str], field_name: str, flags: list[str]) -> tuple[str, ...]:
    out = tuple(_sanitize(v, field_name, flags) for v in values)
    return tuple(v for v in out if v)


def build_substitution_prompt(name: str, ingredients: Sequence[str], allergens: Sequence[str]) -> PromptRequest:
    flags: list[str] = []
    name = _sanitize(name or "", "name", flags)
    ings = _clean_list(ingredients or (), "ingredients", flags)
    alls = _clean_list(allergens or (), "allergens", flags)
    for field_name, value in (("name", name), ("ingredients", ings), ("allergens", alls)):
        if not value:
            raise EmptyField(field_name)
    values = {"name": name, "ingredients": ", ".join(ings), "allergens": ", ".join(alls)}
    # one pass, so user text is never itself treated as a slot
    rendered = _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], SUBSTITUTION_TEMPLATE)
    return PromptRequest(ALLERGEN_PROMPT, name, ings, alls, rendered, tuple(flags))


def build_plain_prompt(name: str, ingredients: Sequence[str]) -> PromptRequest:
    flags: list[str] = []
    name = _sanitize(name or "", "name", flags)
    if not name:
        raise EmptyField("name")
    ings = _clean_list(ingredients or (), "ingredients", flags)
    return PromptRequest(PLAIN, name, ings, (), render_model_input(name, ings), tuple(flags))


def _check_filled(req: PromptRequest) -> None:
    if _PLACEHOLDER_RE.search(req.rendered):
        raise ValidationError("prompt contains an unfilled {placeholder}")


def generate(req: PromptRequest, cfg: GenerationConfig, client: OpenAICompatibleClient) -> str:
    _check_filled(req)
    return client.complete(req.rendered, cfg.request_params())


@dataclass(frozen=True)
class Generation:
    id: str
    prompt_hash: str
    text: str
    config: dict

    def to_json(self) -> dict:
        return {"id": self.id, "prompt_hash": self.prompt_hash, "text": self.text, "config": self.config}


def generate_many(
    requests: Sequence[tuple[str, PromptRequest]],
    cfg: GenerationConfig,
    client: OpenAICompatibleClient,
    max_inflight: int = 4,
) -> list[Generation]:
    """Run requests concurrently; results come back in submission order."""
    if max_inflight < 1:
        raise ValidationError("max_inflight must be at least 1")
    for _, req in requests:
        _check_filled(req)
    with ThreadPoolExecutor(max_workers=max_inflight) as pool:
        futures = [pool.submit(generate, req, cfg, client) for _, req in requests]
        texts = [f.result() for f in futures]
    return [Generation(rid, req.prompt_hash, text, cfg.to_json()) for (rid, req), text in zip(requests, texts)]


def write_generations(path, gens: Iterable[Generation]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in gens:
            fh.write(json.dumps(g.to_json(), ensure_ascii=False, sort_keys=True) + "\n")
