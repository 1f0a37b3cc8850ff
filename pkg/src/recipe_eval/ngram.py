"""BLEU, ROUGE and perplexity over word tokens."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence, Union

from .core import TokenStream, words
from .errors import EmptyInput, EmptyReference, EmptyTrace

Tokens = Union[TokenStream, Sequence[str], str]

SMOOTHING_EPSILON = 1e-9


def _tokens(x: Tokens) -> tuple[str, ...]:
    if isinstance(x, str):
        return tuple(words(x))
    if isinstance(x, TokenStream):
        return x.tokens
    return tuple(x)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class NgramScore:
    bleu: dict[int, float]
    rouge1_f: float
    rouge2_f: float
    rougeL_f: float


def modified_precision(candidate: Tokens, reference: Tokens, n: int) -> Fraction | None:
    """Clipped n-gram precision, or None when neither side has any n-gram."""
    cand, ref = _tokens(candidate), _tokens(reference)
    c, r = ngrams(cand, n), ngrams(ref, n)
    total = sum(c.values())
    if total == 0:
        return None if not r else Fraction(0)
    clipped = sum(min(count, r[g]) for g, count in c.items())
    return Fraction(clipped, total)


def bleu(candidate: Tokens, reference: Tokens, max_n: int = 4) -> dict[int, float]:
    """Cumulative sentence BLEU-1..max_n against a single reference.

    Zero precisions are floored at ``SMOOTHING_EPSILON``. An order for which
    neither sentence is long enough to hold an n-gram counts as a perfect
    match, so that ``bleu(x, x)`` is 1 for every order even on short inputs.
    """
    if not 1 <= max_n <= 4:
        raise ValueError("max_n must be in 1..4")
    cand, ref = _tokens(candidate), _tokens(reference)
    if not ref:
        raise EmptyReference("reference has no tokens")
    if not cand:
        return {n: 0.0 for n in range(1, max_n + 1)}

    bp = 1.0 if len(cand) >= len(ref) else math.exp(1 - len(ref) / len(cand))
    scores = {}
    product = 1.0
    for n in range(1, max_n + 1):
        p = modified_precision(cand, ref, n)
        product *= 1.0 if p is None else max(float(p), SMOOTHING_EPSILON)
        scores[n] = bp * product ** (1 / n)
    return scores


def _f1(overlap: int, n_cand: int, n_ref: int) -> float:
    if overlap == 0:
        return 0.0
    p, r = overlap / n_cand, overlap / n_ref
    return 2 * p * r / (p + r)


def rouge_n(cand: Sequence[str], ref: Sequence[str], n: int) -> float:
    c, r = ngrams(cand, n), ngrams(ref, n)
    if not c and not r:
        return 1.0
    overlap = sum((c & r).values())
    return _f1(overlap, sum(c.values()), sum(r.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge(candidate: Tokens, reference: Tokens) -> tuple[float, float, float]:
    """(ROUGE-1 F1, ROUGE-2 F1, ROUGE-L F1)."""
    cand, ref = _tokens(candidate), _tokens(reference)
    if not cand or not ref:
        raise EmptyInput("ROUGE needs non-empty candidate and reference")
    lcs = lcs_length(cand, ref)
    return rouge_n(cand, ref, 1), rouge_n(cand, ref, 2), _f1(lcs, len(cand), len(ref))


def score_pair(candidate: Tokens, reference: Tokens) -> NgramScore:
    cand, ref = _tokens(candidate), _tokens(reference)
    b = bleu(cand, ref, 4)
    if cand:
        r1, r2, rl = rouge(cand, ref)
    else:
        r1 = r2 = rl = 0.0
    return NgramScore(bleu=b, rouge1_f=r1, rouge2_f=r2, rougeL_f=rl)


# ---------------------------------------------------------------------------
# Perplexity


@dataclass(frozen=True)
class LogProbTrace:
    token_logprobs: tuple[float, ...]
    token_count: int = field(default=-1)
    id: str | None = None

    def __post_init__(self):
        if self.token_count == -1:
            object.__setattr__(self, "token_count", len(self.token_logprobs))
        if self.token_count != len(self.token_logprobs):
            raise ValueError("token_count does not match the number of logprobs")
        if any(not lp <= 0 for lp in self.token_logprobs):
            raise ValueError("log-probabilities must be <= 0")

    @classmethod
    def of(cls, logprobs: Iterable[float], id: str | None = None) -> "LogProbTrace":
        return cls(tuple(float(x) for x in logprobs), id=id)


def perplexity(trace: LogProbTrace) -> float:
    if trace.token_count < 1:
        raise EmptyTrace("perplexity of an empty trace")
    return math.exp(-math.fsum(trace.token_logprobs) / trace.token_count)


def read_logprob_traces(path: str | Path) -> dict[str, LogProbTrace]:
    """JSON Lines of ``{"id": ..., "token_logprobs": [...]}``."""
    traces = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                rid = str(obj["id"])
                traces[rid] = LogProbTrace.of(obj["token_logprobs"], id=rid)
    return traces
