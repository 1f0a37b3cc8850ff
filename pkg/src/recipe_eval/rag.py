"""Retrieval-assisted allergen substitution.

Mentions of allergens are found by alias matching over folded tokens first;
anything left over is checked against the chunked knowledge base by vector
similarity. Every replacement reads ``<substitute> (substitute for <allergen>)``.
"""

from __future__ import annotations

import hashlib
import math
import re
import struct
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .allergens import AllergenEntry, KnowledgeChunk, chunk_db
from .core import fold, parse_ingredient, tokenize
from .domain import number_key
from .errors import EmptyIndex, ValidationError

DIM = 512
DEFAULT_THRESHOLD = 0.55
ANNOTATION_RE = re.compile(r"\(\s*substitute for ([^()]*?)\s*\)", re.IGNORECASE)


# ---------------------------------------------------------------------------
# Embedders


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def char_trigrams(text: str) -> Counter:
    """Trigram counts of the folded, whitespace-collapsed text padded by one space."""
    norm = " ".join(fold(text).split())
    if not norm:
        return Counter()
    padded = f" {norm} "
    return Counter(padded[i : i + 3] for i in range(len(padded) - 2))


@lru_cache(maxsize=1 << 16)
def _bucket(gram: str, dim: int) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


@dataclass(frozen=True)
class HashedTrigramEmbedder:
    """Character-trigram term frequencies hashed into ``dim`` buckets."""

    dim: int = DIM

    def embed(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim, dtype=np.float64)
        for gram, count in sorted(char_trigrams(text).items()):
            v[_bucket(gram, self.dim)] += count
        norm = math.sqrt(math.fsum(x * x for x in v))
        return v / norm if norm else v


class RemoteEmbedder:
    """Embeddings from an OpenAI-compatible ``/v1/embeddings`` service."""

    def __init__(self, client, dim: int = DIM):
        self.client = client
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            return np.zeros(self.dim)
        (row,) = self.client.embed([text])
        v = np.asarray(row, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValidationError(f"remote embedding has dimension {v.size}, expected {self.dim}")
        norm = math.sqrt(math.fsum(x * x for x in v))
        return v / norm if norm else v


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = math.sqrt(math.fsum(x * x for x in a))
    nb = math.sqrt(math.fsum(x * x for x in b))
    if not na or not nb:
        return 0.0
    return math.fsum(a * b) / (na * nb)


# ---------------------------------------------------------------------------
# Index


class VectorIndex:
    """Exact cosine search over a small set of labelled vectors."""

    def __init__(self, dim: int = DIM):
        self.dim = dim
        self._ids: list[str] = []
        self._rows: list[np.ndarray] = []
        self.chunks: dict[str, KnowledgeChunk] = {}

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self._ids)

    def add(self, chunk_id: str, vector: Sequence[float]) -> None:
        v = np.asarray(vector, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValidationError(f"vector for {chunk_id!r} has shape {v.shape}, expected ({self.dim},)")
        if chunk_id in self._ids:
            raise ValidationError(f"duplicate chunk id {chunk_id!r}")
        self._ids.append(chunk_id)
        self._rows.append(v)

    def vector(self, chunk_id: str) -> np.ndarray:
        return self._rows[self._ids.index(chunk_id)]

    @classmethod
    def build(cls, chunks: Iterable[KnowledgeChunk], embedder: Embedder | None = None) -> "VectorIndex":
        embedder = embedder or HashedTrigramEmbedder()
        index = cls(embedder.dim)
        for c in chunks:
            index.add(c.chunk_id, embedder.embed(c.text))
            index.chunks[c.chunk_id] = c
        return index

    def search(self, query: Sequence[float], k: int = 1) -> list[tuple[str, float]]:
        if k < 1:
            raise ValidationError("k must be at least 1")
        if not self._ids:
            raise EmptyIndex("search on an empty index")
        q = np.asarray(query, dtype=np.float64)
        # exactly rounded per row, so scores do not depend on row position
        scored = [(cid, cosine(row, q)) for cid, row in zip(self._ids, self._rows)]
        scored.sort(key=lambda item: (-item[1], item[0]))
        return scored[:k]

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<II", self.dim, len(self._ids)))
            for cid, row in zip(self._ids, self._rows):
                raw = cid.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(row.astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        data = Path(path).read_bytes()
        try:
            dim, count = struct.unpack_from("<II", data, 0)
            pos = 8
            index = cls(dim)
            for _ in range(count):
                (n,) = struct.unpack_from("<I", data, pos)
                pos += 4
                cid = data[pos : pos + n].decode("utf-8")
                pos += n
                row = np.frombuffer(data, dtype="<f4", count=dim, offset=pos)
                pos += 4 * dim
                index.add(cid, row.astype(np.float64))
        except (struct.error, ValueError, UnicodeDecodeError) as exc:
            raise ValidationError(f"{path}: corrupt index file ({exc})") from exc
        if pos != len(data):
            raise ValidationError(f"{path}: {len(data) - pos} trailing bytes")
        return index


def search(index: VectorIndex, query: Sequence[float], k: int = 1) -> list[tuple[str, float]]:
    return index.search(query, k)


def build_index(db: Sequence[AllergenEntry], embedder: Embedder | None = None) -> VectorIndex:
    return VectorIndex.build(chunk_db(db), embedder)


# ---------------------------------------------------------------------------
# Substitution


@dataclass(frozen=True)
class Substitution:
    allergen: str
    substitute: str
    positions: tuple[tuple[int, int], ...]  # character spans in the original text


@dataclass(frozen=True)
class SubstitutionResult:
    original: str
    rewritten: str
    applied: tuple[Substitution, ...] = ()
    kept: tuple[str, ...] = ()
    flags: tuple[str, ...] = ()


def _keys(phrase: str) -> tuple[str, ...]:
    return tuple(number_key(t) for t in tokenize(phrase).tokens)


def annotation(substitute: str, allergen: str) -> str:
    return f"{substitute} (substitute for {allergen})"


def _occurrences(keys: list[str], pattern: tuple[str, ...]) -> Iterable[int]:
    n = len(pattern)
    for i in range(len(keys) - n + 1):
        if tuple(keys[i : i + n]) == pattern:
            yield i


def _resolve_allergens(names: Iterable[str], db: Sequence[AllergenEntry]) -> tuple[list[AllergenEntry], list[str]]:
    by_form = {}
    for e in db:
        for form in e.surface_forms:
            by_form.setdefault(_keys(form), e)
    picked, unknown = [], []
    for name in names:
        e = by_form.get(_keys(name))
        if e is None:
            unknown.append(name)
        elif e not in picked:
            picked.append(e)
    return picked, unknown


def _choose_substitute(entry: AllergenEntry, others: Sequence[AllergenEntry]) -> tuple[str, bool]:
    """Highest-ranked substitute that mentions none of the other requested allergens."""
    forbidden = [_keys(f) for o in others if o is not entry for f in o.surface_forms]
    for sub in entry.substitutes:
        keys = list(_keys(sub))
        if not any(next(iter(_occurrences(keys, f)), None) is not None for f in forbidden):
            return sub, True
    return entry.default_substitute, False


_SEGMENT_RE = re.compile(r"[^,;:\n.()]+")
MAX_MENTION_TOKENS = 8


def substitute_recipe(
    recipe_text: str,
    db: Sequence[AllergenEntry],
    index: VectorIndex | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    allergens: Iterable[str] | None = None,
    embedder: Embedder | None = None,
) -> SubstitutionResult:
    """Replace allergen mentions in ``recipe_text`` by annotated substitutes.

    ``allergens`` limits the rewrite to the named entries (canonical names or
    aliases); by default every entry in ``db`` is active. When a list is given,
    a substitute that itself mentions another listed allergen is skipped in
    favour of the next-ranked one.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError("threshold must lie in [0, 1]")
    flags: list[str] = []
    if allergens is None:
        active = list(db)
        restricted = False
    else:
        active, unknown = _resolve_allergens(allergens, db)
        flags.extend(f"unknown allergen {u!r}" for u in unknown)
        restricted = True

    ts = tokenize(recipe_text)
    keys = [number_key(t) for t in ts.tokens]
    spans = ts.source_span_map
    n = len(keys)

    # Tokens already inside "<substitute> (substitute for x)" are never touched.
    masked = [False] * n
    all_subs = sorted({_keys(s) for e in db for s in e.substitutes}, key=len, reverse=True)
    for m in ANNOTATION_RE.finditer(recipe_text):
        inside = [i for i in range(n) if m.start() <= spans[i][0] < m.end()]
        first = inside[0] if inside else next((i for i in range(n) if spans[i][0] >= m.end()), n)
        for i in inside:
            masked[i] = True
        for sub in all_subs:
            s = first - len(sub)
            if s >= 0 and tuple(keys[s:first]) == sub and not any(masked[s:first]):
                for i in range(s, first):
                    masked[i] = True
                break

    # Per entry: tokens covered by one of its own substitutes ("oat milk" is
    # not a mention of milk).
    own_sub_mask: dict[str, set[int]] = {}
    patterns: list[tuple[tuple[str, ...], AllergenEntry]] = []
    for e in active:
        cover = set()
        for s in e.substitutes:
            pat = _keys(s)
            for i in _occurrences(keys, pat):
                cover.update(range(i, i + len(pat)))
        own_sub_mask[e.allergen] = cover
        patterns.extend((_keys(f), e) for f in e.surface_forms)
    patterns.sort(key=lambda p: len(p[0]), reverse=True)  # stable: db order breaks ties

    matches: list[tuple[int, int, AllergenEntry]] = []
    i = 0
    while i < n:
        hit = None
        if not masked[i]:
            for pat, e in patterns:
                j = i + len(pat)
                if (
                    pat
                    and tuple(keys[i:j]) == pat
                    and not any(masked[i:j])
                    and not own_sub_mask[e.allergen].intersection(range(i, j))
                ):
                    hit = (i, j, e)
                    break
        if hit:
            matches.append(hit)
            i = hit[1]
        else:
            i += 1

    # Retrieval fallback for short ingredient-like mentions with no alias hit.
    matched_tokens = {t for s, e_, _ in matches for t in range(s, e_)}
    kept: list[str] = []
    if index is not None and len(index):
        embedder = embedder or HashedTrigramEmbedder(index.dim)
        active_names = {e.allergen: e for e in active}
        for seg in _SEGMENT_RE.finditer(recipe_text):
            tok_ids = [t for t in range(n) if seg.start() <= spans[t][0] < seg.end()]
            if not tok_ids or len(tok_ids) > MAX_MENTION_TOKENS:
                continue
            if matched_tokens.intersection(tok_ids) or any(masked[t] for t in tok_ids):
                continue
            text = seg.group().strip()
            if not any(ch.isalpha() for ch in text):
                continue
            (cid, sim), = index.search(embedder.embed(text), 1)
            if sim < threshold:
                kept.append(text)
                continue
            head = number_key(parse_ingredient(text).head_noun)
            chunk = index.chunks.get(cid)
            candidates = [
                active_names[a]
                for a in (chunk.allergens if chunk else ())
                if a in active_names and any(_keys(f)[-1:] == (head,) for f in active_names[a].surface_forms)
            ]
            head_tok = next((t for t in reversed(tok_ids) if keys[t] == head), None)
            if not candidates or head_tok is None or head_tok in own_sub_mask[candidates[0].allergen]:
                flags.append(f"retrieval hit {cid} ({sim:.3f}) for {text!r} rejected: no alias shares its head noun")
                kept.append(text)
                continue
            matches.append((head_tok, head_tok + 1, candidates[0]))
    else:
        for seg in _SEGMENT_RE.finditer(recipe_text):
            tok_ids = [t for t in range(n) if seg.start() <= spans[t][0] < seg.end()]
            if tok_ids and len(tok_ids) <= MAX_MENTION_TOKENS and not matched_tokens.intersection(tok_ids):
                text = seg.group().strip()
                if any(ch.isalpha() for ch in text) and not any(masked[t] for t in tok_ids):
                    kept.append(text)

    if not matches:
        return SubstitutionResult(recipe_text, recipe_text, (), tuple(kept), tuple(flags))

    chosen: dict[str, str] = {}
    for _, _, e in matches:
        if e.allergen not in chosen:
            sub, clean = _choose_substitute(e, active if restricted else ())
            if not clean:
                flags.append(f"every substitute for {e.allergen!r} mentions another requested allergen")
            chosen[e.allergen] = sub

    out = recipe_text
    positions: dict[str, list[tuple[int, int]]] = {}
    for s, t, e in sorted(matches, key=lambda m: m[0], reverse=True):
        a, b = spans[s][0], spans[t - 1][1]
        out = out[:a] + annotation(chosen[e.allergen], e.allergen) + out[b:]
        positions.setdefault(e.allergen, []).append((a, b))

    applied = tuple(
        Substitution(e.allergen, chosen[e.allergen], tuple(sorted(positions[e.allergen])))
        for e in db
        if e.allergen in positions
    )
    return SubstitutionResult(recipe_text, out, applied, tuple(kept), tuple(flags))


def substitute_fields(
    fields: Sequence[str],
    db: Sequence[AllergenEntry],
    index: VectorIndex | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    allergens: Iterable[str] | None = None,
    embedder: Embedder | None = None,
) -> list[SubstitutionResult]:
    """Rewrite several pieces of one recipe (ingredient lines, steps) consistently.

    Substitute choice depends only on the allergen and the requested set, so
    per-field rewriting gives the same replacement everywhere.
    """
    allergens = None if allergens is None else list(allergens)
    return [substitute_recipe(f, db, index, threshold, allergens, embedder) for f in fields]
