"""Corpus-level evaluation, run manifests, and table and radar rendering."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from .config import MetricConfig, default_config, load_metric_config
from .core import Recipe
from .domain import score_recipe
from .errors import EmptySteps, IdMismatch, ValidationError
from .judge import CATEGORY_KEYS, CATEGORY_LABELS, JudgeAggregate
from .ngram import LogProbTrace, perplexity, score_pair

NGRAM_KEYS = ("rouge1", "rouge2", "rougeL", "bleu1", "bleu2", "bleu3", "bleu4")
DOMAIN_KEYS = ("ingredient_coverage", "step_complexity", "recipe_coherence", "temp_time_spec")

LABELS = {
    "rouge1": "ROUGE-1",
    "rouge2": "ROUGE-2",
    "rougeL": "ROUGE-L",
    "bleu1": "BLEU-1",
    "bleu2": "BLEU-2",
    "bleu3": "BLEU-3",
    "bleu4": "BLEU-4",
    "perplexity": "Perplexity",
    "ingredient_coverage": "Ingredient Coverage",
    "step_complexity": "Step Complexity",
    "recipe_coherence": "Recipe Coherence",
    "temp_time_spec": "Temp. and Time Spec.",
    **CATEGORY_LABELS,
}

TABLES = {
    "small": ("rouge1", "rouge2", "rougeL", "bleu1", "bleu2", "bleu3"),
    "traditional": NGRAM_KEYS + ("perplexity",),
    "domain": DOMAIN_KEYS,
    "judge": CATEGORY_KEYS,
}


# ---------------------------------------------------------------------------
# Generated text handling

_NUMBERED_RE = re.compile(r"(?:^|\s)(?:step\s*)?\d{1,2}\s*[.)]\s+", re.IGNORECASE)


def split_steps(text: str) -> list[str]:
    """Break free generated text into steps.

    Line breaks win; failing that, inline numbering ("1) ... 2) ..."); and
    failing that, sentence ends.
    """
    lines = [l.strip() for l in text.splitlines() if l.strip()]
    if len(lines) > 1:
        return lines
    text = text.strip()
    if not text:
        return []
    parts = [p.strip() for p in _NUMBERED_RE.split(text) if p.strip()]
    if len(parts) > 1:
        return parts
    return [s.strip() for s in re.split(r"(?<=[.!?])\s+", text) if s.strip()]


@dataclass(frozen=True)
class GeneratedRecipe:
    id: str
    steps: tuple[str, ...]

    @property
    def text(self) -> str:
        return " ".join(self.steps)

    @classmethod
    def from_json(cls, obj: dict) -> "GeneratedRecipe":
        if "id" not in obj:
            raise ValidationError("generated record has no id")
        if "steps" in obj:
            steps = tuple(str(s) for s in obj["steps"])
        else:
            steps = tuple(split_steps(str(obj.get("text", ""))))
        return cls(str(obj["id"]), steps)


def read_generated(path) -> dict[str, GeneratedRecipe]:
    out: dict[str, GeneratedRecipe] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                g = GeneratedRecipe.from_json(json.loads(line))
                if g.id in out:
                    raise ValidationError(f"{path}:{lineno}: duplicate id {g.id!r}")
                out[g.id] = g
    return out


def read_references(path) -> dict[str, Recipe]:
    out: dict[str, Recipe] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                r = Recipe.from_json(json.loads(line))
                if r.id is None:
                    raise ValidationError(f"{path}:{lineno}: reference has no id")
                if r.id in out:
                    raise ValidationError(f"{path}:{lineno}: duplicate id {r.id!r}")
                out[r.id] = r
    return out


# ---------------------------------------------------------------------------
# Evaluation


def score_one(args: tuple[GeneratedRecipe, Recipe, MetricConfig, LogProbTrace | None]) -> dict:
    gen, ref, config, trace = args
    ng = score_pair(gen.text, " ".join(ref.steps))
    row: dict = {"id": gen.id}
    row.update(rouge1=ng.rouge1_f, rouge2=ng.rouge2_f, rougeL=ng.rougeL_f)
    row.update({f"bleu{n}": ng.bleu[n] for n in range(1, 5)})
    row["perplexity"] = perplexity(trace) if trace is not None else None
    try:
        row.update(score_recipe(ref, gen.steps, config).as_dict())
        row["note"] = ""
    except EmptySteps:
        row.update(dict.fromkeys(DOMAIN_KEYS, 0.0))
        row["note"] = "empty generation"
    return row


@dataclass(frozen=True)
class EvaluationReport:
    model_label: str
    ngram: dict[str, float | None]
    domain: dict[str, float]
    sample_count: int
    config_hash: str
    timestamp: str = ""
    judge: JudgeAggregate | None = None

    def __post_init__(self):
        if self.sample_count <= 0:
            raise ValidationError("a report needs at least one sample")

    def values(self) -> dict[str, float | None]:
        out = dict(self.ngram)
        out.update(self.domain)
        if self.judge is not None:
            out.update(self.judge.means)
        return out

    def to_json(self) -> dict:
        return {
            "model_label": self.model_label,
            "ngram": self.ngram,
            "domain": self.domain,
            "judge": self.judge.to_json() if self.judge else None,
            "sample_count": self.sample_count,
            "config_hash": self.config_hash,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EvaluationReport":
        judge = JudgeAggregate.from_json(obj["judge"]) if obj.get("judge") else None
        return cls(obj["model_label"], obj["ngram"], obj["domain"], obj["sample_count"],
                   obj["config_hash"], obj.get("timestamp", ""), judge)


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def evaluate(
    generated: Mapping[str, GeneratedRecipe],
    references: Mapping[str, Recipe],
    config: MetricConfig | None = None,
    traces: Mapping[str, LogProbTrace] | None = None,
    model_label: str = "model",
    workers: int = 1,
) -> tuple[list[dict], EvaluationReport]:
    """Per-recipe rows (in reference order) and their averages."""
    config = config or default_config()
    missing_gen = sorted(set(references) - set(generated))
    missing_ref = sorted(set(generated) - set(references))
    if missing_gen or missing_ref:
        raise IdMismatch(missing_gen, missing_ref)
    if not references:
        raise ValidationError("nothing to evaluate")
    traces = traces or {}
    jobs = [(generated[rid], ref, config, traces.get(rid)) for rid, ref in references.items()]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(score_one, jobs, chunksize=16))
    else:
        rows = [score_one(j) for j in jobs]

    ngram: dict[str, float | None] = {k: _mean([r[k] for r in rows]) for k in NGRAM_KEYS}
    ppl = [r["perplexity"] for r in rows if r["perplexity"] is not None]
    ngram["perplexity"] = _mean(ppl) if ppl else None
    domain = {k: _mean([r[k] for r in rows]) for k in DOMAIN_KEYS}
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    report = EvaluationReport(model_label, ngram, domain, len(rows), config.config_hash, stamp)
    return rows, report


ROW_COLUMNS = ("id",) + NGRAM_KEYS + ("perplexity",) + DOMAIN_KEYS + ("note",)


def write_rows_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROW_COLUMNS)
        for r in rows:
            w.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c])
                        for c in ROW_COLUMNS])


# ---------------------------------------------------------------------------
# Manifests


@dataclass
class RunManifest:
    command: str
    inputs: dict[str, str | None]
    seed: int | None = None
    mode: str = "plain"
    endpoints: list[str] = field(default_factory=list)
    options: dict = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    config_hash: str | None = None
    tool_version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path) -> "RunManifest":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**obj)


def load_config_for(path: str | None) -> MetricConfig:
    return default_config() if path is None else load_metric_config(path)


# ---------------------------------------------------------------------------
# Tables


def format_value(v: float | None) -> str:
    """Two decimals, or three when the third is significant (0.59, 0.329, 90.67)."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "-"
    s = f"{v:.3f}"
    return s[:-1] if s.endswith("0") else s


def table_columns(table: str | Sequence[str]) -> tuple[str, ...]:
    if isinstance(table, str):
        if table not in TABLES:
            raise ValidationError(f"unknown table {table!r}; choose from {', '.join(TABLES)}")
        return TABLES[table]
    return tuple(table)


def render_table(rows: Sequence[tuple[str, Mapping[str, float | None]]], table, fmt: str = "text") -> str:
    cols = table_columns(table)
    header = ["Model"] + [LABELS.get(c, c) for c in cols]
    body = [[label] + [format_value(vals.get(c)) for c in cols] for label, vals in rows]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(body)
        return buf.getvalue()
    if fmt != "text":
        raise ValidationError(f"unknown format {fmt!r}")
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = []
    for j, r in enumerate([header] + body):
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def read_table_csv(path) -> list[tuple[str, dict[str, float | None]]]:
    """Rows of a ``model,<metric key>...`` CSV, such as stored published values."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or reader.fieldnames[0] != "model":
            raise ValidationError(f"{path}: first column must be 'model'")
        out = []
        for row in reader:
            vals = {k: (float(v) if v not in ("", "-") else None) for k, v in row.items() if k != "model"}
            out.append((row["model"], vals))
    return out


# ---------------------------------------------------------------------------
# Radar data


def radar_rows(agg: JudgeAggregate) -> list[tuple[str, float]]:
    return [(CATEGORY_LABELS[k], agg.means[k]) for k in CATEGORY_KEYS]


def write_radar_csv(agg: JudgeAggregate, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["category", "value"])
        for label, value in radar_rows(agg):
            w.writerow([label, repr(value)])


def radar_points(values: Sequence[float], radius: float = 120.0, center: float = 160.0, scale: float = 5.0):
    pts = []
    for i, v in enumerate(values):
        angle = -math.pi / 2 + 2 * math.pi * i / len(values)
        r = radius * v / scale
        pts.append((center + r * math.cos(angle), center + r * math.sin(angle)))
    return pts


def radar_svg(agg: JudgeAggregate, title: str = "") -> str:
    labels = [l for l, _ in radar_rows(agg)]
    values = [v for _, v in radar_rows(agg)]
    size, center, radius = 320, 160.0, 120.0

    def poly(points, style):
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        return f'  <polygon points="{coords}" {style}/>'

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">']
    if title:
        parts.append(f'  <title>{_xml_escape(title)}</title>')
    for level in range(1, 6):
        parts.append(poly(radar_points([level] * 6, radius, center), 'fill="none" stroke="#ccc"'))
    parts.append(poly(radar_points(values, radius, center), 'class="scores" fill="#4a7" fill-opacity="0.35" stroke="#274"'))
    for (x, y), label in zip(radar_points([5.6] * 6, radius, center), labels):
        parts.append(f'  <text x="{x:.2f}" y="{y:.2f}" font-size="10" text-anchor="middle">{_xml_escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _xml_escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")
