"""``skgp`` command line entry point."""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import sys
import warnings
from pathlib import Path

from .baselines import (
    build_lexicons,
    check_split,
    keyphrase_direction,
    keyphrase_score,
    lexicon_for,
    sentiment_direction,
)
from .core import evaluate
from .errors import LLMFactorError, ParseFailure
from .ingest import LoadStats, get_manifest, load_dataset, load_stock_registry, read_jsonl, write_jsonl
from .runner import (
    compare_reports,
    evaluate_predictions,
    export_factor_timeline,
    load_config,
    load_reports,
    read_predictions,
    run_experiment,
)
from .skgp import Layer


def _date(s: str) -> dt.date:
    return dt.date.fromisoformat(s)


def cmd_run(args) -> int:
    config = load_config(args.config)
    result = run_experiment(config)
    for layer, lr in result.layers.items():
        r = lr.report
        print(f"{r.label}: ACC {r.acc * 100:.2f}  MCC {r.mcc:.3f}  parse failures {r.n_parse_failures}")
    print(f"artifacts: {result.run_dir}")
    return 0


def cmd_eval(args) -> int:
    reports = evaluate_predictions(read_predictions(args.predictions), dataset=args.dataset or "")
    payload = [r.to_dict() for r in reports]
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(payload, indent=2))
    return 0


def cmd_timeline(args) -> int:
    timeline = export_factor_timeline(
        read_predictions(args.predictions), args.ticker, args.date_from, args.date_to,
        Layer.parse(args.layer) if args.layer else None,
    )
    text = timeline.to_csv(args.out)
    if not args.out:
        sys.stdout.write(text)
    return 0


def cmd_compare(args) -> int:
    reports = [r for path in args.reports for r in load_reports(path)]
    sys.stdout.write(compare_reports(reports, args.format))
    return 0


def cmd_ingest(args) -> int:
    registry = load_stock_registry(args.registry) if args.registry else None
    stats = LoadStats()
    n = write_jsonl(load_dataset(args.dataset, args.root, registry, args.t, stats), args.out)
    m = get_manifest(args.dataset)
    print(f"{m.name}: wrote {n} records to {args.out}; skipped {dict(stats.skipped)} "
          f"(published size {m.record_count})")
    return 0


def _read_refs(path: str) -> list[tuple[str, str]]:
    """Record refs from a canonical JSONL or a ``ticker,date`` CSV."""
    if path.endswith(".jsonl"):
        return [r.ref for r in read_jsonl(path)]
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and r[0].strip()]
    if rows and [c.strip().lower() for c in rows[0][:2]] == ["ticker", "date"]:
        rows = rows[1:]
    return [(r[0].strip(), r[1].strip()) for r in rows]


def cmd_baseline_keyphrase(args) -> int:
    lexicons = build_lexicons(args.lexicon[0], args.lexicon[1], k=args.k, per_stock=not args.global_lexicon)
    records = list(read_jsonl(args.records))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        check_split(_read_refs(args.train_refs) if args.train_refs else None, (r.ref for r in records))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    pairs = []
    for rec in records:
        lex = lexicon_for(lexicons, rec.target.ticker)
        pred = keyphrase_direction(keyphrase_score(rec.news_blob, lex)) if lex and len(lex) else None
        pairs.append((rec.gold, pred))
    report = evaluate(pairs, label=f"keyphrase/{args.name}", dataset=args.dataset or "")
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_baseline_sentiment(args) -> int:
    labels = {}
    with open(args.labels, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            ref = row.get("record_ref") or [row["ticker"], row["date"]]
            labels[tuple(ref)] = row["label"]
    pairs = []
    for rec in read_jsonl(args.records):
        try:
            pred = sentiment_direction(labels[rec.ref])
        except (KeyError, ParseFailure):
            pred = None
        pairs.append((rec.gold, pred))
    report = evaluate(pairs, label=f"sentiment/{args.name} (neutral=fall)", dataset=args.dataset or "")
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skgp", description="Factor-guided LLM stock movement prediction.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a YAML config")
    run.add_argument("--config", required=True)
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="score a predictions JSONL")
    ev.add_argument("--predictions", required=True)
    ev.add_argument("--dataset")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval)

    tl = sub.add_parser("timeline", help="export a per-day factor timeline as CSV")
    tl.add_argument("--predictions", required=True)
    tl.add_argument("--ticker", required=True)
    tl.add_argument("--from", dest="date_from", type=_date)
    tl.add_argument("--to", dest="date_to", type=_date)
    tl.add_argument("--layer")
    tl.add_argument("--out")
    tl.set_defaults(func=cmd_timeline)

    cmp_ = sub.add_parser("compare", help="render reports as a comparison table")
    cmp_.add_argument("reports", nargs="+")
    cmp_.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    cmp_.set_defaults(func=cmd_compare)

    ing = sub.add_parser("ingest", help="convert a native dataset layout to canonical JSONL")
    ing.add_argument("--dataset", required=True, choices=["stocknet", "cmin-us", "cmin-cn", "edt"])
    ing.add_argument("--root", required=True)
    ing.add_argument("--out", required=True)
    ing.add_argument("--registry")
    ing.add_argument("--t", type=int, default=5)
    ing.set_defaults(func=cmd_ingest)

    base = sub.add_parser("baseline", help="keyphrase / sentiment baselines")
    bsub = base.add_subparsers(dest="baseline", required=True)
    kp = bsub.add_parser("keyphrase")
    kp.add_argument("--records", required=True)
    kp.add_argument("--lexicon", nargs=2, metavar=("POS_CSV", "NEG_CSV"), required=True)
    kp.add_argument("--k", type=int, default=5)
    kp.add_argument("--global", dest="global_lexicon", action="store_true", help="one lexicon for all stocks")
    kp.add_argument("--train-refs", help="records the phrase lists were built from (JSONL or ticker,date CSV)")
    kp.add_argument("--name", default="lexicon")
    kp.add_argument("--dataset")
    kp.set_defaults(func=cmd_baseline_keyphrase)
    se = bsub.add_parser("sentiment")
    se.add_argument("--records", required=True)
    se.add_argument("--labels", required=True)
    se.add_argument("--name", default="external")
    se.add_argument("--dataset")
    se.set_defaults(func=cmd_baseline_sentiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (LLMFactorError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
