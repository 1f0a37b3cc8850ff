"""Recipe domain types, text normalization and tokenization."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import NoContentTokens

# A token is a maximal alphanumeric run; hyphens are kept when internal and a
# degree sign is kept when it directly follows a digit ("350°f").
TOKEN_RE = re.compile(r"[^\W_]+(?:-[^\W_]+|(?<=\d)°[^\W_]*)*")

STOPWORDS = frozenset({"of", "a", "an", "the"})

START_TOKEN = "<|startoftext|>"


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[str, ...]
    source_span_map: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]


def fold_case(text: str) -> tuple[str, list[int]]:
    """Lowercase ``text`` character by character.

    Returns the folded string and, for every folded character, the index of
    the source character it came from. Per-character lowering keeps the
    offset map exact even where ``str.lower`` expands a character.
    """
    out: list[str] = []
    origin: list[int] = []
    for i, ch in enumerate(text):
        low = ch.lower()
        out.append(low)
        origin.extend([i] * len(low))
    return "".join(out), origin


def fold(text: str) -> str:
    return fold_case(text)[0]


def tokenize(text: str) -> TokenStream:
    folded, origin = fold_case(text)
    tokens = []
    spans = []
    for m in TOKEN_RE.finditer(folded):
        tokens.append(m.group())
        spans.append((origin[m.start()], origin[m.end() - 1] + 1))
    return TokenStream(tuple(tokens), tuple(spans))


def words(text: str) -> list[str]:
    """Token strings only; the common case for metrics."""
    return TOKEN_RE.findall(fold(text))


def is_alphabetic(token: str) -> bool:
    return any(ch.isalpha() for ch in token)


# ---------------------------------------------------------------------------
# Units


def _default_units_path() -> Path:
    return Path(str(resources.files("recipe_eval") / "data" / "units.tsv"))


def read_unit_lexicon(path: str | Path) -> dict[str, str]:
    """Parse a ``canonical<TAB>variant,variant`` file into variant -> canonical."""
    lexicon: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            canonical, variants = line.split("\t")
        except ValueError:
            raise ValueError(f"{path}:{lineno}: expected exactly one TAB") from None
        canonical = canonical.strip().lower()
        lexicon[canonical] = canonical
        for v in variants.split(","):
            v = v.strip().lower()
            if v:
                lexicon[v] = canonical
    return lexicon


@lru_cache(maxsize=None)
def unit_lexicon() -> dict[str, str]:
    return read_unit_lexicon(_default_units_path())


# ---------------------------------------------------------------------------
# Ingredients


@dataclass(frozen=True)
class IngredientSpec:
    raw: str
    quantity: Fraction | None
    unit: str | None
    name_tokens: tuple[str, ...]
    head_noun: str

    @property
    def name(self) -> str:
        return " ".join(self.name_tokens)


_PAREN_RE = re.compile(r"\([^()]*\)|\[[^\[\]]*\]")
_VULGAR = "½⅓⅔¼¾⅕⅖⅗⅘⅙⅚⅛⅜⅝⅞"
_QTY_RE = re.compile(
    rf"""^\s*(?:
        (?P<mw>\d+)\s+(?P<mn>\d+)\s*/\s*(?P<md>\d+)       # 1 1/2
      | (?P<fn>\d+)\s*/\s*(?P<fd>\d+)                     # 3/4
      | (?P<vw>\d+)?\s*(?P<vf>[{_VULGAR}])                # 1½, ½
      | (?P<dec>\d+(?:\.\d+)?)                            # 2, 0.5
    )
    (?:\s*(?:-|–|to)\s*\d+(?:\.\d+)?(?:\s*/\s*\d+)?)?     # upper end of a range
    (?=\s|$|[^\d/.])""",
    re.VERBOSE,
)


def _quantity(m: re.Match) -> Fraction | None:
    g = m.groupdict()
    if g["md"] is not None:
        if int(g["md"]) == 0:
            return None
        return int(g["mw"]) + Fraction(int(g["mn"]), int(g["md"]))
    if g["fd"] is not None:
        if int(g["fd"]) == 0:
            return None
        return Fraction(int(g["fn"]), int(g["fd"]))
    if g["vf"] is not None:
        frac = Fraction(unicodedata.numeric(g["vf"])).limit_denominator(16)
        return int(g["vw"] or 0) + frac
    return Fraction(g["dec"])


def _strip_parentheticals(text: str) -> str:
    prev = None
    while prev != text:
        prev, text = text, _PAREN_RE.sub(" ", text)
    return text


def parse_ingredient(raw: str, units: dict[str, str] | None = None) -> IngredientSpec:
    """Split an ingredient line into quantity, unit and normalized name.

    Parentheticals are dropped and anything after the first comma is treated
    as preparation notes ("butter, softened"). A unit is only recognized
    directly after a quantity; unknown units stay in the name.
    """
    units = unit_lexicon() if units is None else units
    text = _strip_parentheticals(raw)
    head, sep, _ = text.partition(",")
    if sep and any(ch.isalpha() for ch in head):
        text = head

    quantity = None
    m = _QTY_RE.match(text)
    if m:
        quantity = _quantity(m)
        if quantity is not None:
            text = text[m.end():]

    toks = list(tokenize(text).tokens)
    unit = None
    unit_token = None
    if quantity is not None and toks:
        first = toks[0]
        if first in units:
            unit, unit_token = units[first], first
            toks = toks[1:]

    name_tokens = [t for t in toks if t not in STOPWORDS and not t.isdigit()]
    if not name_tokens and unit_token is not None:
        name_tokens = [unit_token]
        unit = None
    if not name_tokens:
        name_tokens = [t for t in tokenize(raw).tokens if is_alphabetic(t)]
    if not name_tokens:
        raise NoContentTokens(f"no alphabetic token in {raw!r}")
    return IngredientSpec(
        raw=raw,
        quantity=quantity,
        unit=unit,
        name_tokens=tuple(name_tokens),
        head_noun=name_tokens[-1],
    )


# ---------------------------------------------------------------------------
# Recipes


@dataclass(frozen=True)
class Recipe:
    name: str
    ingredients: tuple[IngredientSpec, ...] = ()
    steps: tuple[str, ...] = ()
    id: str | None = field(default=None, compare=False)

    @classmethod
    def from_raw(
        cls,
        name: str,
        ingredients: Iterable[str],
        steps: Iterable[str] = (),
        id: str | None = None,
    ) -> "Recipe":
        return cls(
            name=name,
            ingredients=tuple(parse_ingredient(r) for r in ingredients),
            steps=tuple(steps),
            id=id,
        )

    @property
    def ingredient_raws(self) -> list[str]:
        return [i.raw for i in self.ingredients]

    def to_json(self) -> dict:
        out = {}
        if self.id is not None:
            out["id"] = self.id
        out.update(name=self.name, ingredients=self.ingredient_raws, steps=list(self.steps))
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Recipe":
        rid = obj.get("id")
        return cls.from_raw(
            obj.get("name", ""),
            obj.get("ingredients", []),
            obj.get("steps", []),
            id=None if rid is None else str(rid),
        )


def render_model_input(name: str, ingredients: Sequence[str]) -> str:
    return f"{START_TOKEN}{name}\nIngredients: {', '.join(ingredients)}"


def format_model_input(r: Recipe) -> str:
    """The fine-tuning input block: start token, name, then the ingredient line."""
    return render_model_input(r.name, r.ingredient_raws)
