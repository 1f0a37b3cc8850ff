"""Allergen substitution database: loading, serialization and chunking."""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .errors import DuplicateAllergen, InvalidChunkParams, SchemaViolation

DEFAULT_DB_PATH = Path(str(resources.files("recipe_eval") / "data" / "allergens.db"))

CHUNK_SIZE = 1000
CHUNK_OVERLAP = 200

_HEADER_RE = re.compile(r"^\[([^\[\]]+)\]$")
_KEYS = ("aliases", "substitutes", "notes")


@dataclass(frozen=True)
class AllergenEntry:
    allergen: str
    aliases: tuple[str, ...]
    substitutes: tuple[str, ...]
    notes: str = ""

    @property
    def default_substitute(self) -> str:
        return self.substitutes[0]

    @property
    def surface_forms(self) -> tuple[str, ...]:
        return (self.allergen,) + self.aliases


@dataclass(frozen=True)
class KnowledgeChunk:
    chunk_id: str
    text: str
    token_span: tuple[int, int]
    allergens: tuple[str, ...] = ()


def _split_list(value: str) -> tuple[str, ...]:
    return tuple(v.strip().lower() for v in value.split(",") if v.strip())


def _check_entry(name: str, fields: dict[str, str], line: int) -> AllergenEntry:
    if "substitutes" not in fields:
        raise SchemaViolation(line, f"[{name}] has no substitutes line")
    aliases = _split_list(fields.get("aliases", ""))
    substitutes = _split_list(fields["substitutes"])
    if not substitutes:
        raise SchemaViolation(line, f"[{name}] has an empty substitutes list")
    forms = (name,) + aliases
    if len(set(forms)) != len(forms):
        raise SchemaViolation(line, f"[{name}] repeats a name among its aliases")
    clash = set(forms) & set(substitutes)
    if clash:
        raise SchemaViolation(line, f"[{name}] lists {sorted(clash)[0]!r} as its own substitute")
    return AllergenEntry(name, aliases, substitutes, fields.get("notes", "").strip())


def parse_allergen_db(text: str) -> list[AllergenEntry]:
    entries: list[AllergenEntry] = []
    seen: set[str] = set()
    name = None
    header_line = 0
    fields: dict[str, str] = {}

    def close():
        if name is not None:
            entries.append(_check_entry(name, fields, header_line))

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _HEADER_RE.match(line)
        if m:
            close()
            name = m.group(1).strip().lower()
            if not name:
                raise SchemaViolation(lineno, "empty allergen name")
            if name in seen:
                raise DuplicateAllergen(f"line {lineno}: allergen {name!r} defined twice")
            seen.add(name)
            header_line, fields = lineno, {}
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower()
        if not sep:
            raise SchemaViolation(lineno, "expected a [allergen] header or key = value")
        if name is None:
            raise SchemaViolation(lineno, f"{key!r} outside an allergen block")
        if key not in _KEYS:
            raise SchemaViolation(lineno, f"unknown key {key!r}")
        if key in fields:
            raise SchemaViolation(lineno, f"duplicate key {key!r}")
        fields[key] = value.strip()
    close()
    if not entries:
        raise SchemaViolation(1, "no allergen entries")
    return entries


def load_allergen_db(path: str | Path | None = None) -> list[AllergenEntry]:
    path = DEFAULT_DB_PATH if path is None else Path(path)
    return parse_allergen_db(path.read_text(encoding="utf-8"))


def serialize_db(entries: Sequence[AllergenEntry]) -> str:
    blocks = []
    for e in entries:
        lines = [f"[{e.allergen}]"]
        if e.aliases:
            lines.append(f"aliases = {', '.join(e.aliases)}")
        lines.append(f"substitutes = {', '.join(e.substitutes)}")
        if e.notes:
            lines.append(f"notes = {e.notes}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


# ---------------------------------------------------------------------------
# Rendering and chunking


def render_entry(e: AllergenEntry) -> str:
    return f"ALLERGEN: {e.allergen}. SUBSTITUTES: {', '.join(e.substitutes)}. NOTES: {e.notes}"


def render_db(entries: Sequence[AllergenEntry]) -> str:
    return "\n\n".join(render_entry(e) for e in entries)


_WS_TOKEN_RE = re.compile(r"\S+")


def window_spans(n_tokens: int, size: int = CHUNK_SIZE, overlap: int = CHUNK_OVERLAP) -> list[tuple[int, int]]:
    """Token index windows of ``size`` advancing by ``size - overlap``."""
    if not (isinstance(size, int) and isinstance(overlap, int)) or not size > overlap >= 0:
        raise InvalidChunkParams(f"need size > overlap >= 0, got size={size}, overlap={overlap}")
    stride = size - overlap
    spans = []
    start = 0
    while start < n_tokens:
        end = min(start + size, n_tokens)
        spans.append((start, end))
        if end == n_tokens:
            break
        start += stride
    return spans


def chunk_db(
    entries: Sequence[AllergenEntry], size: int = CHUNK_SIZE, overlap: int = CHUNK_OVERLAP
) -> list[KnowledgeChunk]:
    """Render the database and cut it into overlapping token windows.

    Tokens are whitespace-delimited words of the rendered text; each chunk's
    text is the exact source slice its tokens cover.
    """
    window_spans(0, size, overlap)  # validates parameters before any work
    corpus = render_db(entries)
    tokens = list(_WS_TOKEN_RE.finditer(corpus))

    # token range owned by each entry paragraph
    owners: list[tuple[int, int, str]] = []
    pos = 0
    for e in entries:
        n = len(_WS_TOKEN_RE.findall(render_entry(e)))
        owners.append((pos, pos + n, e.allergen))
        pos += n

    spans = window_spans(len(tokens), size, overlap)
    chunks = []
    for i, (s, t) in enumerate(spans):
        text = corpus[tokens[s].start() : tokens[t - 1].end()]
        allergens = tuple(name for a, b, name in owners if a < t and s < b)
        chunks.append(KnowledgeChunk(f"chunk-{i:04d}", text, (s, t), allergens))
    return chunks


def corpus_tokens(entries: Sequence[AllergenEntry]) -> list[str]:
    return _WS_TOKEN_RE.findall(render_db(entries))
