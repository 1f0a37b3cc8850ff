"""``recipe-eval`` command line: ingest, stats, evaluate, substitute, judge, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .allergens import load_allergen_db
from .client import Endpoint, OpenAICompatibleClient
from .core import Recipe
from .corpus import compute_stats, load_raw_recipes, read_jsonl, sample_recipes, split_corpus, write_jsonl
from .errors import EndpointError, ValidationError
from .judge import MAX_SAMPLES, aggregate, build_judge_prompt, judge_many, prompts_hash
from .ngram import read_logprob_traces
from .prompting import (
    GenerationConfig,
    build_plain_prompt,
    build_substitution_prompt,
    generate_many,
    write_generations,
)
from .rag import DEFAULT_THRESHOLD, build_index, substitute_fields
from .report import (
    TABLES,
    EvaluationReport,
    RunManifest,
    evaluate,
    load_config_for,
    read_generated,
    read_references,
    read_table_csv,
    radar_svg,
    render_table,
    write_radar_csv,
    write_rows_csv,
)

log = logging.getLogger("recipe_eval")

MODES = {"plain": "plain", "prompt": "prompt-substitution", "rag": "rag-substitution"}


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors count as validation errors (exit 1), not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _csv_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _client(args) -> OpenAICompatibleClient:
    if not args.endpoint:
        raise ValidationError("this command needs --endpoint")
    return OpenAICompatibleClient(Endpoint(args.endpoint, model=args.model, chat=args.chat))


def _read_records(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# ingest / stats


def cmd_ingest(args) -> int:
    out = _out_dir(args.out)
    recipes, problems = load_raw_recipes(args.csv)
    for p in problems:
        print(f"skipped row {p.row_index}: {p.reason}", file=sys.stderr)
    if args.sample is not None:
        recipes = sample_recipes(recipes, args.sample, args.seed)
    split = split_corpus(recipes, args.seed)
    files = {}
    for name, part in (("train", split.train), ("val", split.validation), ("test", split.test),
                       ("eval", split.eval_subset())):
        files[name] = str(out / f"{name}.jsonl")
        write_jsonl(part, files[name])
    stats = compute_stats(recipes)
    _write_json(out / "stats.json", stats.to_json())
    stats.write_csv(out / "stats.csv")
    files.update(stats_json=str(out / "stats.json"), stats_csv=str(out / "stats.csv"))
    RunManifest("ingest", {"csv": args.csv}, seed=args.seed,
                options={"sample": args.sample, "skipped_rows": len(problems)}, outputs=files).write(out / "manifest.json")
    print(f"{len(recipes)} recipes -> train {len(split.train)}, val {len(split.validation)}, test {len(split.test)}")
    return 0


def cmd_stats(args) -> int:
    out = _out_dir(args.out)
    if args.input.endswith(".csv"):
        recipes, _ = load_raw_recipes(args.input)
    else:
        recipes = read_jsonl(args.input)
    stats = compute_stats(recipes, tuple(args.budgets))
    _write_json(out / "stats.json", stats.to_json())
    stats.write_csv(out / "stats.csv")
    RunManifest("stats", {"input": args.input}, options={"budgets": list(args.budgets)},
                outputs={"stats_json": str(out / "stats.json")}).write(out / "manifest.json")
    for budget, frac in stats.token_length_cdf.items():
        print(f"share under {budget} tokens: {frac:.4f}")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def run_evaluation(generated: str, references: str, config: str | None, logprobs: str | None,
                   label: str, workers: int):
    cfg = load_config_for(config)
    traces = read_logprob_traces(logprobs) if logprobs else None
    return evaluate(read_generated(generated), read_references(references), cfg, traces, label, workers)


def cmd_evaluate(args) -> int:
    if args.manifest:
        m = RunManifest.read(args.manifest)
        if m.command != "evaluate":
            raise ValidationError(f"{args.manifest} is a {m.command!r} manifest")
        inputs, opts = m.inputs, m.options
        generated, references = inputs["generated"], inputs["references"]
        config, logprobs = inputs.get("config"), inputs.get("logprobs")
        label, workers = opts.get("label", "model"), opts.get("workers", 1)
    else:
        if not (args.generated and args.references):
            raise ValidationError("evaluate needs --generated and --references (or --manifest)")
        generated, references, config, logprobs = args.generated, args.references, args.config, args.logprobs
        label, workers = args.label, args.workers
    out = _out_dir(args.out)
    rows, report = run_evaluation(generated, references, config, logprobs, label, workers)
    write_rows_csv(rows, out / "per_recipe.csv")
    _write_json(out / "report.json", report.to_json())
    table_rows = [(report.model_label, report.values())]
    text = render_table(table_rows, "traditional") + "\n" + render_table(table_rows, "domain")
    (out / "table.txt").write_text(text, encoding="utf-8")
    (out / "table.csv").write_text(
        render_table(table_rows, TABLES["traditional"] + TABLES["domain"], fmt="csv"), encoding="utf-8")
    RunManifest(
        "evaluate",
        {"generated": generated, "references": references, "config": config, "logprobs": logprobs},
        options={"label": label, "workers": workers},
        outputs={"report": str(out / "report.json"), "per_recipe": str(out / "per_recipe.csv")},
        config_hash=report.config_hash,
    ).write(out / "manifest.json")
    print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# substitute


def _substitute_rag(records: list[dict], args) -> tuple[list[dict], list[dict]]:
    db = load_allergen_db(args.db)
    index = build_index(db)
    allergens = args.allergens or None
    out, log_rows = [], []
    for obj in records:
        r = Recipe.from_json(obj)
        ingredients = substitute_fields(r.ingredient_raws, db, index, args.threshold, allergens)
        steps = substitute_fields(r.steps, db, index, args.threshold, allergens)
        results = ingredients + steps
        applied = [s for res in results for s in res.applied]
        flags = sorted({f for res in results for f in res.flags})
        if applied:
            obj = dict(obj)
            obj["ingredients"] = [res.rewritten for res in ingredients]
            obj["steps"] = [res.rewritten for res in steps]
        out.append(obj)
        log_rows.append({
            "id": r.id,
            "substitutions": sorted({(s.allergen, s.substitute) for s in applied}),
            "count": len(applied),
            "flags": flags,
        })
    return out, log_rows


def _detected_allergens(r: Recipe, db) -> list[str]:
    found = {s.allergen for res in substitute_fields(r.ingredient_raws, db) for s in res.applied}
    return [e.allergen for e in db if e.allergen in found]


def _substitute_prompt(records: list[dict], args):
    db = load_allergen_db(args.db)
    requests = []
    for i, obj in enumerate(records):
        r = Recipe.from_json(obj)
        rid = r.id if r.id is not None else str(i)
        allergens = args.allergens or _detected_allergens(r, db)
        if allergens:
            req = build_substitution_prompt(r.name, r.ingredient_raws, allergens)
        else:
            req = build_plain_prompt(r.name, r.ingredient_raws)
        requests.append((rid, req))
    client = _client(args)
    with client:
        return generate_many(requests, GenerationConfig.for_mode("prompt"), client, args.max_inflight), client


def cmd_substitute(args) -> int:
    out = _out_dir(args.out)
    records = _read_records(args.recipes)
    endpoints = []
    if args.mode == "rag":
        rows, log_rows = _substitute_rag(records, args)
        with open(out / "substituted.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            for obj in rows:
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
        with open(out / "substitutions.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            for row in log_rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        print(f"{sum(r['count'] for r in log_rows)} substitutions in {len(rows)} recipes")
    else:
        gens, client = _substitute_prompt(records, args)
        write_generations(out / "substituted.jsonl", gens)
        endpoints.append(client.endpoint.identifier())
        print(f"{len(gens)} recipes generated")
    RunManifest(
        "substitute", {"recipes": args.recipes, "db": args.db}, mode=MODES[args.mode], endpoints=endpoints,
        options={"allergens": args.allergens, "threshold": args.threshold, "max_inflight": args.max_inflight},
        outputs={"substituted": str(out / "substituted.jsonl")},
    ).write(out / "manifest.json")
    return 0


# ---------------------------------------------------------------------------
# judge


def _generated_text(obj: dict) -> str:
    if "text" in obj:
        return str(obj["text"])
    return "\n".join(str(s) for s in obj.get("steps", []))


def cmd_judge(args) -> int:
    out = _out_dir(args.out)
    records = _read_records(args.generated)[:MAX_SAMPLES]
    if not records:
        raise ValidationError(f"{args.generated}: no generated recipes")
    refs = read_references(args.references) if args.references else {}
    items = []
    for i, obj in enumerate(records):
        rid = str(obj.get("id", i))
        req = None
        ref = refs.get(rid)
        if ref is not None and args.allergens:
            req = build_substitution_prompt(ref.name, ref.ingredient_raws, args.allergens)
        elif ref is not None:
            req = build_plain_prompt(ref.name, ref.ingredient_raws)
        items.append((rid, _generated_text(obj), req))
    client = _client(args)
    with client:
        cards = judge_many(items, client, args.max_inflight)
    with open(out / "scorecards.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for c in cards:
            fh.write(json.dumps(c.to_json(), ensure_ascii=False) + "\n")
    agg = aggregate(cards, client.endpoint.identifier(),
                    prompts_hash(build_judge_prompt(text, req) for _, text, req in items))
    _write_json(out / "aggregate.json", agg.to_json())
    write_radar_csv(agg, out / "radar.csv")
    (out / "radar.svg").write_text(radar_svg(agg, args.label), encoding="utf-8")
    RunManifest(
        "judge", {"generated": args.generated, "references": args.references}, endpoints=[client.endpoint.identifier()],
        options={"allergens": args.allergens, "max_inflight": args.max_inflight, "label": args.label},
        outputs={"aggregate": str(out / "aggregate.json"), "radar": str(out / "radar.csv")},
    ).write(out / "manifest.json")
    print(render_table([(args.label, agg.means)], "judge"), end="")
    return 0


# ---------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    rows = []
    for path in args.reports:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if "means" in obj:  # a judge aggregate
            rows.append((Path(path).parent.name or path, obj["means"]))
        else:
            rep = EvaluationReport.from_json(obj)
            rows.append((rep.model_label, rep.values()))
    if args.from_csv:
        rows.extend(read_table_csv(args.from_csv))
    if not rows:
        raise ValidationError("report needs report JSON files or --from-csv")
    tables = list(TABLES) if args.table == "all" else [args.table]
    text = "\n".join(render_table(rows, t, args.format) for t in tables)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        RunManifest("report", {"reports": ",".join(args.reports), "csv": args.from_csv},
                    options={"table": args.table, "format": args.format},
                    outputs={"table": args.out}).write(Path(args.out).with_name("manifest.json"))
    else:
        print(text, end="")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = ArgumentParser(prog="recipe-eval", description=__doc__)
    p.add_argument("--version", action="version", version=f"recipe-eval {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    def endpoint_flags(sp):
        sp.add_argument("--endpoint", help="base URL of an OpenAI-compatible server")
        sp.add_argument("--model", default="default")
        sp.add_argument("--chat", action="store_true", help="use /v1/chat/completions")
        sp.add_argument("--max-inflight", type=int, default=4)

    sp = sub.add_parser("ingest", help="split a RAW_recipes CSV and compute corpus statistics")
    sp.add_argument("csv")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sample", type=int)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("stats", help="corpus statistics for a CSV or JSONL file")
    sp.add_argument("input")
    sp.add_argument("--out", required=True)
    sp.add_argument("--budgets", type=int, nargs="+", default=[256, 512])
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("evaluate", help="n-gram and domain metrics for generated recipes")
    sp.add_argument("--generated")
    sp.add_argument("--references")
    sp.add_argument("--config")
    sp.add_argument("--logprobs", help="JSONL of per-token log-probabilities for perplexity")
    sp.add_argument("--label", default="model")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--manifest", help="re-run the evaluation recorded in this manifest")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("substitute", help="replace allergens by retrieval or by prompting a model")
    sp.add_argument("recipes")
    sp.add_argument("--mode", choices=("rag", "prompt"), default="rag")
    sp.add_argument("--db", help="allergen database (default: the shipped one)")
    sp.add_argument("--allergens", type=_csv_list)
    sp.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    endpoint_flags(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_substitute)

    sp = sub.add_parser("judge", help="score generated recipes with a judge model")
    sp.add_argument("generated")
    sp.add_argument("--references")
    sp.add_argument("--allergens", type=_csv_list)
    sp.add_argument("--label", default="model")
    endpoint_flags(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_judge)

    sp = sub.add_parser("report", help="render result tables")
    sp.add_argument("reports", nargs="*")
    sp.add_argument("--from-csv")
    sp.add_argument("--table", choices=tuple(TABLES) + ("all",), default="all")
    sp.add_argument("--format", choices=("text", "csv"), default="text")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except EndpointError as exc:
        print(f"endpoint error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
