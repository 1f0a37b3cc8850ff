"""Loading of the domain-metric configuration and its lexicons."""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .core import read_unit_lexicon

DEFAULT_CONFIG_PATH = Path(str(resources.files("recipe_eval") / "data" / "metric_config.ini"))


@dataclass(frozen=True)
class OrderingRule:
    before: str
    after: str
    required: bool

    @classmethod
    def parse(cls, text: str) -> "OrderingRule":
        text = text.strip()
        required = text.endswith("!")
        before, sep, after = text.rstrip("!").partition("<")
        if not sep or not before.strip() or not after.strip():
            raise ValueError(f"bad ordering rule {text!r}")
        return cls(before.strip(), after.strip(), required)

    def __str__(self) -> str:
        return f"{self.before}<{self.after}{'!' if self.required else ''}"


@dataclass(frozen=True, eq=False)
class MetricConfig:
    path: str
    config_hash: str

    cooking_verbs: frozenset[str]
    entities: frozenset[str]
    units: dict[str, str]

    min_token_length: int

    verb_weight: float
    length_weight: float
    param_weight: float
    verb_cap: int
    length_cap: float
    size_units: tuple[str, ...]

    reference_weight: float
    ordering_weight: float
    producer_verbs: frozenset[str]
    combining_verbs: frozenset[str]
    combined_products: frozenset[str]
    determiners: frozenset[str]
    determiner_window: int
    ordering_rules: tuple[OrderingRule, ...]

    heat_verbs: frozenset[str]
    baking_verbs: frozenset[str]
    frying_verbs: frozenset[str]
    boiling_verbs: frozenset[str]
    ranges: dict[str, tuple[float, float]]
    bare_letter_min: float
    bare_degrees_f_above: float

    @property
    def all_verbs(self) -> frozenset[str]:
        rule_verbs = {v for r in self.ordering_rules for v in (r.before, r.after)}
        return (
            self.cooking_verbs
            | self.producer_verbs
            | self.combining_verbs
            | self.heat_verbs
            | self.baking_verbs
            | self.frying_verbs
            | self.boiling_verbs
            | rule_verbs
        )


def _words(value: str) -> list[str]:
    return [w.strip().lower() for w in value.split(",") if w.strip()]


def _range(value: str) -> tuple[float, float]:
    lo, hi = (float(x) for x in value.split(","))
    if lo > hi:
        raise ValueError(f"empty range {value!r}")
    return lo, hi


def read_word_list(path: Path) -> frozenset[str]:
    lines = path.read_text(encoding="utf-8").splitlines()
    return frozenset(l.strip().lower() for l in lines if l.strip() and not l.startswith("#"))


def load_metric_config(path: str | Path | None = None) -> MetricConfig:
    path = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    raw = path.read_bytes()
    cp = configparser.ConfigParser(inline_comment_prefixes=None)
    cp.read_string(raw.decode("utf-8"), source=str(path))

    lex = cp["lexicons"]
    lexicon_paths = [path.parent / lex[key] for key in ("cooking_verbs", "entities", "units")]
    digest = hashlib.sha256(raw)
    for p in lexicon_paths:
        digest.update(b"\0" + p.name.encode() + b"\0" + p.read_bytes())

    sc, co, tt = cp["step_complexity"], cp["coherence"], cp["temp_time"]
    ranges = {
        key: _range(tt[key])
        for key in (
            "baking_f",
            "baking_c",
            "frying_f",
            "frying_c",
            "generic_temp_f",
            "generic_temp_c",
            "boiling_minutes",
            "generic_minutes",
        )
    }
    return MetricConfig(
        path=str(path),
        config_hash=digest.hexdigest(),
        cooking_verbs=read_word_list(lexicon_paths[0]),
        entities=read_word_list(lexicon_paths[1]),
        units=read_unit_lexicon(lexicon_paths[2]),
        min_token_length=cp.getint("ingredient_coverage", "min_token_length"),
        verb_weight=sc.getfloat("verb_weight"),
        length_weight=sc.getfloat("length_weight"),
        param_weight=sc.getfloat("param_weight"),
        verb_cap=sc.getint("verb_cap"),
        length_cap=sc.getfloat("length_cap"),
        size_units=tuple(_words(sc["size_units"])),
        reference_weight=co.getfloat("reference_weight"),
        ordering_weight=co.getfloat("ordering_weight"),
        producer_verbs=frozenset(_words(co["producer_verbs"])),
        combining_verbs=frozenset(_words(co["combining_verbs"])),
        combined_products=frozenset(_words(co["combined_products"])),
        determiners=frozenset(_words(co["determiners"])),
        determiner_window=co.getint("determiner_window"),
        ordering_rules=tuple(OrderingRule.parse(r) for r in co["ordering_rules"].split(",")),
        heat_verbs=frozenset(_words(tt["heat_verbs"])),
        baking_verbs=frozenset(_words(tt["baking_verbs"])),
        frying_verbs=frozenset(_words(tt["frying_verbs"])),
        boiling_verbs=frozenset(_words(tt["boiling_verbs"])),
        ranges=ranges,
        bare_letter_min=tt.getfloat("bare_letter_min"),
        bare_degrees_f_above=tt.getfloat("bare_degrees_f_above"),
    )


@lru_cache(maxsize=None)
def default_config() -> MetricConfig:
    return load_metric_config()
