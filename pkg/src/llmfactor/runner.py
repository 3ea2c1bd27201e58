"""Experiment orchestration: config, ablation sweeps, artifacts, timelines and tables."""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import hashlib
import io
import json
import logging
import os
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import yaml

from .backend import Backend, BackendConfig, CachingBackend, MockBackend, RemoteBackend, ResponseCache
from .core import Direction, EvalReport, evaluate
from .errors import ConfigError, EmptyTimeline, LLMFactorError
from .ingest import DatasetRecord, LoadStats, get_manifest, load_dataset, load_stock_registry, read_jsonl
from .matcher import StockMatcher, load_aliases
from .skgp import (
    DEFAULT_NEWS_BUDGET,
    Layer,
    PredictionRecord,
    PromptBundle,
    run_skgp,
)
from .templates import PromptTemplateSet, default_templates, load_templates

log = logging.getLogger(__name__)

ALL_LAYERS = (Layer.PRICE_ONLY, Layer.PLUS_FACTOR, Layer.PLUS_FACTOR_RELATION)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    records_path: Optional[str] = None  # canonical JSONL; overrides dataset_root
    dataset_root: Optional[str] = None
    registry_path: Optional[str] = None
    alias_path: Optional[str] = None
    backend: BackendConfig = field(default_factory=BackendConfig)
    mock: str = "momentum"  # built-in mock used when backend.kind == "mock"
    language: Optional[str] = None  # defaults to the dataset's language
    templates_dir: Optional[str] = None
    template_variant: int = 0
    layers: tuple[Layer, ...] = ALL_LAYERS
    t: int = 5
    k: int = 5
    news_budget: Optional[int] = DEFAULT_NEWS_BUDGET
    sample_limit: Optional[int] = None
    seed: int = 0
    output_dir: str = "runs"
    run_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(Layer.parse(x) if isinstance(x, str) else x for x in self.layers))
        if self.t < 1 or self.k < 1:
            raise ConfigError("t and k must be >= 1")
        if not self.layers:
            raise ConfigError("at least one layer is required")
        if self.records_path is None and self.dataset_root is None:
            raise ConfigError("set records_path (canonical JSONL) or dataset_root")
        if self.sample_limit is not None and self.sample_limit < 1:
            raise ConfigError("sample_limit must be >= 1")
        get_manifest(self.dataset)

    def snapshot(self) -> dict:
        d = dataclasses.asdict(self)
        d["layers"] = [layer.value for layer in self.layers]
        return d

    def resolved_run_id(self) -> str:
        if self.run_id:
            return self.run_id
        d = self.snapshot()
        d.pop("output_dir")
        digest = hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()
        return digest[:12]


def config_from_dict(d: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    d = dict(d)
    backend = d.pop("backend", {}) or {}
    unknown = set(d) - {f.name for f in dataclasses.fields(ExperimentConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        bcfg = BackendConfig(**backend)
    except TypeError as e:
        raise ConfigError(f"bad backend section: {e}") from e
    if base_dir is not None:
        for key in ("records_path", "dataset_root", "registry_path", "alias_path", "templates_dir", "output_dir"):
            if d.get(key) and not os.path.isabs(d[key]):
                d[key] = os.path.normpath(base_dir / d[key])
    if "layers" in d:
        d["layers"] = tuple(d["layers"])
    try:
        return ExperimentConfig(backend=bcfg, **d)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    """Read a YAML experiment config; relative paths resolve against the file's directory."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return config_from_dict(data, path.parent)


# --------------------------------------------------------------------------- built-in mock

def momentum_mock(templates: PromptTemplateSet, min_rises: int = 3, model_id: str = "mock-momentum") -> MockBackend:
    """Offline stand-in for an LLM: predicts "rise" when at least ``min_rises`` history lines say so.

    Relation prompts get a "competitor" answer and factor prompts get the
    first sentences of the news as a numbered list.
    """
    cn = templates.language == "CN"
    rel_prefix = templates.relation_template.split("{", 1)[0]
    conclusion_tail = templates.price_conclusion.rsplit("}", 1)[-1]
    factor_prefixes = tuple(t.split("{", 1)[0] for t in templates.factor_templates)
    rose_line = re.compile(r"的股价上涨。$" if cn else r" rose\.$", re.MULTILINE)

    def relation(prompt: str) -> str:
        sentence = prompt[len(rel_prefix):] if prompt.startswith(rel_prefix) else prompt
        return sentence.replace("___", "竞争" if cn else "competitor")

    def factors(prompt: str) -> str:
        news = prompt.split("\n", 1)[1] if "\n" in prompt else prompt
        parts = [p.strip() for p in re.split(r"(?<=[.!?])\s+|(?<=[。！？])|\n+", news) if p.strip()]
        return "\n".join(f"{i}. {p}" for i, p in enumerate(parts[:3], start=1))

    def price(prompt: str) -> str:
        last = prompt.rsplit("\n", 1)[-1]
        up = len(rose_line.findall(prompt)) >= min_rises
        if cn:
            word = "上涨" if up else "下跌"
            return last.replace("___", word) + ("理由：近期走势。")
        word = "rise" if up else "fall"
        return last.replace("___", word) + " Reason: recent momentum."

    return MockBackend(
        [
            (lambda p: p.startswith(rel_prefix), relation),
            (lambda p: p.endswith(conclusion_tail), price),
            (lambda p: p.startswith(factor_prefixes), factors),
            (None, "I cannot determine this."),
        ],
        model_id=model_id,
    )


# --------------------------------------------------------------------------- running

@dataclass
class LayerResult:
    layer: Layer
    bundles: list[PromptBundle]
    predictions: list[PredictionRecord]
    report: EvalReport


@dataclass
class RunResult:
    run_dir: Path
    layers: dict[Layer, LayerResult]
    load_stats: LoadStats

    @property
    def reports(self) -> dict[Layer, EvalReport]:
        return {k: v.report for k, v in self.layers.items()}


def layer_slug(layer: Layer) -> str:
    return layer.value.replace("+", "_")


def select_records(records: Sequence[DatasetRecord], limit: Optional[int], seed: int) -> list[DatasetRecord]:
    ordered = sorted(records, key=lambda r: r.ref)
    if limit is None or limit >= len(ordered):
        return ordered
    chosen = random.Random(seed).sample(ordered, limit)
    return sorted(chosen, key=lambda r: r.ref)


def _load_records(config: ExperimentConfig, stats: LoadStats) -> list[DatasetRecord]:
    registry = load_stock_registry(config.registry_path) if config.registry_path else None
    if config.records_path:
        records = list(read_jsonl(config.records_path))
        stats.emitted = len(records)
        return records
    return list(load_dataset(config.dataset, config.dataset_root, registry, config.t, stats))


def _build_matcher(config: ExperimentConfig, records: Sequence[DatasetRecord]) -> StockMatcher:
    if config.registry_path:
        registry = load_stock_registry(config.registry_path)
    else:
        registry = list({r.target.ticker: r.target for r in records}.values())
    known = {s.ticker for s in registry}
    registry = list(registry) + [r.target for r in records if r.target.ticker not in known]
    registry = list({s.ticker: s for s in registry}.values())
    aliases = load_aliases(config.alias_path) if config.alias_path else None
    return StockMatcher(registry, aliases)


def _templates(config: ExperimentConfig) -> PromptTemplateSet:
    language = config.language or get_manifest(config.dataset).language
    if config.templates_dir:
        return load_templates(config.templates_dir, language, config.template_variant)
    return default_templates(language, config.template_variant)


def _make_backend(config: ExperimentConfig, templates: PromptTemplateSet, cache: ResponseCache) -> Backend:
    b = config.backend
    if b.kind == "mock":
        if config.mock != "momentum":
            raise ConfigError(f"unknown built-in mock {config.mock!r}")
        return CachingBackend(momentum_mock(templates, model_id=b.model_id), cache)
    if b.kind == "replay":
        return CachingBackend(None, cache, model_id=b.model_id)
    if not os.environ.get(b.api_key_env):
        raise ConfigError(f"remote backend needs ${b.api_key_env}")
    return CachingBackend(RemoteBackend(b), cache)


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=False) + "\n")


def _process(record, matcher, templates, backend, layer, config) -> tuple[PromptBundle, PredictionRecord]:
    try:
        return run_skgp(record, matcher, templates, backend, layer, config.k, config.news_budget)
    except LLMFactorError as e:
        bundle = PromptBundle(record.ref, layer, error=f"{type(e).__name__}: {e}")
        return bundle, PredictionRecord(record.ref, None, bundle.error, record.gold, layer, backend.model_id)


def run_experiment(config: ExperimentConfig, backend: Optional[Backend] = None) -> RunResult:
    """Run every configured layer over the (sampled) dataset and persist all artifacts.

    Responses are logged to ``<run_dir>/replay.jsonl``; rerunning the same
    config picks them up, so an interrupted run resumes where it stopped.
    """
    stats = LoadStats()
    records = select_records(_load_records(config, stats), config.sample_limit, config.seed)
    if not records:
        raise ConfigError("dataset produced no records")
    templates = _templates(config)
    matcher = _build_matcher(config, records)
    run_dir = Path(config.output_dir) / config.resolved_run_id()
    run_dir.mkdir(parents=True, exist_ok=True)
    cache = ResponseCache(run_dir / "replay.jsonl")
    if backend is None:
        backend = _make_backend(config, templates, cache)
    elif not isinstance(backend, CachingBackend):
        backend = CachingBackend(backend, cache)
    (run_dir / "config.json").write_text(json.dumps(config.snapshot(), indent=2, ensure_ascii=False) + "\n",
                                         encoding="utf-8")
    dataset_name = get_manifest(config.dataset).name
    results: dict[Layer, LayerResult] = {}
    workers = config.backend.max_concurrent_requests
    for layer in config.layers:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(lambda r: _process(r, matcher, templates, backend, layer, config), records))
        outs.sort(key=lambda bp: bp[0].record_ref)
        bundles = [b for b, _ in outs]
        preds = [p for _, p in outs]
        report = evaluate(((p.gold, p.direction) for p in preds),
                          label=f"{backend.model_id}/{layer.value}", dataset=dataset_name)
        slug = layer_slug(layer)
        _write_jsonl(run_dir / f"bundles_{slug}.jsonl", (b.to_dict() for b in bundles))
        _write_jsonl(run_dir / f"predictions_{slug}.jsonl", (p.to_dict() for p in preds))
        results[layer] = LayerResult(layer, bundles, preds, report)
        log.info("%s: acc=%.4f mcc=%.4f failures=%d", report.label, report.acc, report.mcc, report.n_parse_failures)
    cache.compact()
    reports = [r.report.to_dict() for r in results.values()]
    meta = {"records": len(records), "emitted": stats.emitted, "skipped": dict(stats.skipped),
            "news_truncated": sum(b.news_truncated for r in results.values() for b in r.bundles),
            "news_budget_chars": config.news_budget,
            "news_items_per_record": {"max": max(len(r.news) for r in records),
                                      "mean": round(sum(len(r.news) for r in records) / len(records), 3)}}
    (run_dir / "reports.json").write_text(json.dumps({"reports": reports, "meta": meta}, indent=2) + "\n",
                                          encoding="utf-8")
    (run_dir / "report.md").write_text(compare_reports([r.report for r in results.values()]), encoding="utf-8")
    return RunResult(run_dir, results, stats)


# --------------------------------------------------------------------------- predictions / reports

def read_predictions(path: str | os.PathLike) -> list[PredictionRecord]:
    with open(path, encoding="utf-8") as fh:
        return [PredictionRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def evaluate_predictions(preds: Sequence[PredictionRecord], dataset: str = "") -> list[EvalReport]:
    """One report per (model, layer) present in ``preds``."""
    groups: dict[tuple[str, Layer], list[PredictionRecord]] = {}
    for p in preds:
        groups.setdefault((p.model_id, p.layer), []).append(p)
    return [
        evaluate(((p.gold, p.direction) for p in group), label=f"{model}/{layer.value}", dataset=dataset)
        for (model, layer), group in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1].value))
    ]


def load_reports(path: str | os.PathLike) -> list[EvalReport]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict) and "reports" in data:
        data = data["reports"]
    if isinstance(data, dict):
        data = [data]
    return [EvalReport.from_dict(d) for d in data]


def compare_reports(reports: Sequence[EvalReport], fmt: str = "markdown") -> str:
    """Table with one row per method label and ACC (%) / MCC per dataset column."""
    if not reports:
        raise ValueError("no reports to compare")
    datasets = list(dict.fromkeys(r.dataset or "-" for r in reports))
    labels = list(dict.fromkeys(r.label or "-" for r in reports))
    cell = {(r.label or "-", r.dataset or "-"): r for r in reports}
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method"] + [f"{d} {m}" for d in datasets for m in ("ACC", "MCC")])
        for lab in labels:
            row = [lab]
            for d in datasets:
                r = cell.get((lab, d))
                row += [f"{r.acc * 100:.2f}", f"{r.mcc:.3f}"] if r else ["", ""]
            w.writerow(row)
        return buf.getvalue()
    if fmt not in ("markdown", "md"):
        raise ValueError(f"unknown format {fmt!r}")

    best_acc = {d: max(round(r.acc * 100, 2) for r in reports if (r.dataset or "-") == d) for d in datasets}
    best_mcc = {d: max(round(r.mcc, 3) for r in reports if (r.dataset or "-") == d) for d in datasets}
    multi = len(labels) > 1
    notes = []
    lines = ["| Method | " + " | ".join(f"{d} ACC / MCC" for d in datasets) + " |",
             "|---|" + "---|" * len(datasets)]
    for lab in labels:
        cells = []
        for d in datasets:
            r = cell.get((lab, d))
            if r is None:
                cells.append("")
                continue
            acc, m = f"{r.acc * 100:.2f}", f"{r.mcc:.3f}"
            if multi and round(r.acc * 100, 2) == best_acc[d]:
                acc = f"**{acc}**"
            if multi and round(r.mcc, 3) == best_mcc[d]:
                m = f"**{m}**"
            text = f"{acc} / {m}"
            if r.n_parse_failures:
                notes.append(f"{lab} on {d}: {r.n_parse_failures} unparseable response(s) scored as wrong")
                text += f" [^{len(notes)}]"
            cells.append(text)
        lines.append(f"| {lab} | " + " | ".join(cells) + " |")
    if notes:
        lines.append("")
        lines += [f"[^{i}]: {n}" for i, n in enumerate(notes, start=1)]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- factor timeline

@dataclass(frozen=True)
class TimelineRow:
    date: dt.date
    gold: Direction
    predicted: Optional[Direction]
    factors: tuple[str, ...]


@dataclass(frozen=True)
class FactorTimeline:
    ticker: str
    rows: tuple[TimelineRow, ...]

    def __post_init__(self):
        if any(b.date <= a.date for a, b in zip(self.rows, self.rows[1:])):
            raise ValueError("timeline dates must be strictly increasing")

    def to_csv(self, path: Optional[str | os.PathLike] = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ticker", "date", "gold", "predicted", "factors"])
        for r in self.rows:
            w.writerow([self.ticker, r.date.isoformat(), r.gold.value,
                        r.predicted.value if r.predicted else "parse_failure", " | ".join(r.factors)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def export_factor_timeline(
    predictions: Iterable[PredictionRecord],
    ticker: str,
    date_from: Optional[dt.date] = None,
    date_to: Optional[dt.date] = None,
    layer: Optional[Layer] = None,
) -> FactorTimeline:
    rows: dict[dt.date, TimelineRow] = {}
    for p in predictions:
        if p.ticker != ticker or (layer is not None and p.layer is not layer):
            continue
        d = p.date
        if (date_from and d < date_from) or (date_to and d > date_to):
            continue
        if d in rows:
            raise ValueError(f"several predictions for {ticker} on {d}; pass a layer to disambiguate")
        rows[d] = TimelineRow(d, p.gold, p.direction, p.factors.factors if p.factors else ())
    if not rows:
        raise EmptyTimeline(f"no predictions for {ticker} in the requested range")
    return FactorTimeline(ticker, tuple(rows[d] for d in sorted(rows)))
