"""Food.com RAW_recipes ingestion, splitting and exploratory statistics."""

from __future__ import annotations

import ast
import csv
import json
import logging
import random
import sys
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .core import Recipe, words
from .errors import MissingColumn, NoContentTokens, TooFewRecipes

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("name", "ingredients", "steps")
SPLIT_RATIOS = (Fraction(8, 10), Fraction(1, 10), Fraction(1, 10))
EVAL_SUBSET_SIZE = 500
DEFAULT_BUDGETS = (256, 512)


@dataclass(frozen=True)
class MalformedRow:
    row_index: int
    reason: str


def parse_list_cell(cell: str) -> list[str]:
    """Parse a bracketed list literal such as ``['flour', "it's hot"]``."""
    value = ast.literal_eval(cell.strip())
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ValueError("not a list of strings")
    return value


def load_raw_recipes(path: str | Path) -> tuple[list[Recipe], list[MalformedRow]]:
    """Stream a RAW_recipes CSV into recipes.

    Bad rows are skipped and reported; a missing required column aborts.
    """
    csv.field_size_limit(min(sys.maxsize, 2**31 - 1))
    recipes: list[Recipe] = []
    problems: list[MalformedRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in REQUIRED_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
        for i, row in enumerate(reader):
            try:
                recipes.append(_row_to_recipe(row, i))
            except (ValueError, SyntaxError, MemoryError, RecursionError) as exc:
                problems.append(MalformedRow(i, f"{type(exc).__name__}: {exc}"))
    if problems:
        log.warning("%s: skipped %d malformed row(s)", path, len(problems))
    return recipes, problems


def _row_to_recipe(row: dict, index: int) -> Recipe:
    if None in row:
        raise ValueError("row has more cells than the header")
    name = (row.get("name") or "").strip()
    if not name:
        raise ValueError("empty name")
    ingredients = parse_list_cell(row["ingredients"] or "")
    steps = [s.strip() for s in parse_list_cell(row["steps"] or "") if s.strip()]
    if not steps:
        raise ValueError("no steps")
    rid = (row.get("id") or "").strip() or str(index)
    try:
        return Recipe.from_raw(name, ingredients, steps, id=rid)
    except NoContentTokens as exc:
        raise ValueError(str(exc)) from None


def write_jsonl(recipes: Iterable[Recipe], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in recipes:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path) -> list[Recipe]:
    with open(path, encoding="utf-8") as fh:
        return [Recipe.from_json(json.loads(line)) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# Splitting


def split_sizes(total: int, ratios: Sequence[Fraction] = SPLIT_RATIOS) -> list[int]:
    """Largest-remainder apportionment of ``total`` items; ties go to the earlier split."""
    quotas = [total * Fraction(r) for r in ratios]
    sizes = [int(q) for q in quotas]
    leftover = total - sum(sizes)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:leftover]:
        sizes[i] += 1
    return sizes


@dataclass(frozen=True)
class CorpusSplit:
    train: list[Recipe]
    validation: list[Recipe]
    test: list[Recipe]
    seed: int
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def eval_subset(self, size: int = EVAL_SUBSET_SIZE) -> list[Recipe]:
        return self.test[:size]

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


def split_corpus(recipes: Sequence[Recipe], seed: int) -> CorpusSplit:
    if len(recipes) < 10:
        raise TooFewRecipes(f"need at least 10 recipes to split, got {len(recipes)}")
    order = list(range(len(recipes)))
    random.Random(seed).shuffle(order)  # Fisher-Yates
    shuffled = [recipes[i] for i in order]
    n_train, n_val, _ = split_sizes(len(shuffled))
    return CorpusSplit(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
        seed=seed,
    )


def sample_recipes(recipes: Sequence[Recipe], n: int, seed: int) -> list[Recipe]:
    """Seeded subsample taken before splitting; returns everything when n >= len."""
    if n >= len(recipes):
        return list(recipes)
    picked = random.Random(f"sample:{seed}").sample(range(len(recipes)), n)
    return [recipes[i] for i in sorted(picked)]


# ---------------------------------------------------------------------------
# Statistics


def recipe_text(r: Recipe) -> str:
    return " ".join([*r.ingredient_raws, *r.steps])


def word_count(text: str) -> int:
    return len(words(text))


@dataclass(frozen=True)
class CorpusStats:
    n_recipes: int
    ingredient_counts: dict[str, int]
    unique_ingredient_share_top: float
    token_length_cdf: dict[int, float]

    def top_ingredients(self, n: int = 30) -> list[tuple[str, int]]:
        return top_counts(self.ingredient_counts, n)

    def to_json(self) -> dict:
        return {
            "n_recipes": self.n_recipes,
            "unique_ingredients": len(self.ingredient_counts),
            "unique_ingredient_share_top": self.unique_ingredient_share_top,
            "token_length_cdf": {str(k): v for k, v in self.token_length_cdf.items()},
            "ingredient_counts": dict(top_counts(self.ingredient_counts, None)),
        }

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kind", "key", "value"])
            for budget, frac in self.token_length_cdf.items():
                w.writerow(["token_length_cdf", budget, f"{frac:.6f}"])
            for name, count in top_counts(self.ingredient_counts, None):
                w.writerow(["ingredient_count", name, count])


def top_counts(counts: dict[str, int], n: int | None) -> list[tuple[str, int]]:
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked if n is None else ranked[:n]


@dataclass
class StatsAccumulator:
    """Mergeable partial statistics; ``merge`` is associative and commutative."""

    n_recipes: int = 0
    ingredient_counts: Counter = field(default_factory=Counter)
    length_counts: Counter = field(default_factory=Counter)

    def add(self, r: Recipe, length_tokenizer: Callable[[str], int] = word_count) -> None:
        self.n_recipes += 1
        # each recipe counts once per distinct ingredient
        self.ingredient_counts.update({i.head_noun for i in r.ingredients})
        self.length_counts[length_tokenizer(recipe_text(r))] += 1

    def merge(self, other: "StatsAccumulator") -> "StatsAccumulator":
        return StatsAccumulator(
            self.n_recipes + other.n_recipes,
            self.ingredient_counts + other.ingredient_counts,
            self.length_counts + other.length_counts,
        )

    def finalize(self, budgets: Sequence[int], coverage: float = 0.9) -> CorpusStats:
        n = self.n_recipes
        cdf = {}
        for b in budgets:
            within = sum(c for length, c in self.length_counts.items() if length < b)
            cdf[b] = within / n if n else 0.0
        return CorpusStats(
            n_recipes=n,
            ingredient_counts=dict(self.ingredient_counts),
            unique_ingredient_share_top=head_share(self.ingredient_counts, coverage),
            token_length_cdf=cdf,
        )


def head_share(counts: dict[str, int], coverage: float = 0.9) -> float:
    """Fraction of distinct ingredients that, taken most-frequent first,
    account for ``coverage`` of all ingredient occurrences."""
    if not counts:
        return 0.0
    ranked = sorted(counts.values(), reverse=True)
    target = coverage * sum(ranked)
    running = 0
    for k, c in enumerate(ranked, 1):
        running += c
        if running >= target:
            return k / len(ranked)
    return 1.0


def compute_stats(
    recipes: Iterable[Recipe],
    budgets: Sequence[int] = DEFAULT_BUDGETS,
    length_tokenizer: Callable[[str], int] = word_count,
) -> CorpusStats:
    if list(budgets) != sorted(budgets):
        raise ValueError("budgets must be sorted ascending")
    acc = StatsAccumulator()
    for r in recipes:
        acc.add(r, length_tokenizer)
    return acc.finalize(budgets)
