"""Sequential knowledge-guided prompting: relation -> factors -> price direction.

Renderers and parsers are pure functions. :func:`run_skgp` drives one record
through the stages its ablation layer calls for and keeps every prompt and raw
response for auditing.
"""

from __future__ import annotations

import datetime as dt
import enum
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .backend import Backend
from .core import Direction, MovementWindow, StockEntry
from .errors import BackendError, ParseFailure, TemplateError
from .ingest import DatasetRecord
from .matcher import StockMatcher
from .templates import SYSTEM_PREAMBLE, PromptTemplateSet, fill

DEFAULT_NEWS_BUDGET = 6000
MAX_RELATION_WORDS = 10


class Layer(enum.Enum):
    PRICE_ONLY = "price"
    PLUS_FACTOR = "factor"
    PLUS_FACTOR_RELATION = "factor+relation"

    @property
    def uses_factors(self) -> bool:
        return self is not Layer.PRICE_ONLY

    @property
    def uses_relations(self) -> bool:
        return self is Layer.PLUS_FACTOR_RELATION

    @classmethod
    def parse(cls, value: str) -> "Layer":
        v = value.strip().lower().replace(" ", "")
        aliases = {
            "price": cls.PRICE_ONLY, "priceonly": cls.PRICE_ONLY, "price_only": cls.PRICE_ONLY,
            "factor": cls.PLUS_FACTOR, "+factor": cls.PLUS_FACTOR, "plusfactor": cls.PLUS_FACTOR,
            "factor+relation": cls.PLUS_FACTOR_RELATION, "+factor+relation": cls.PLUS_FACTOR_RELATION,
            "plusfactorrelation": cls.PLUS_FACTOR_RELATION, "full": cls.PLUS_FACTOR_RELATION,
        }
        try:
            return aliases[v]
        except KeyError:
            raise ValueError(f"unknown layer {value!r}") from None


@dataclass(frozen=True)
class RelationFinding:
    target: StockEntry
    peer: StockEntry
    relation_text: str
    raw_response: str
    low_confidence: bool = False

    def to_dict(self) -> dict:
        return {"target": self.target.ticker, "peer": self.peer.ticker, "relation": self.relation_text,
                "raw_response": self.raw_response, "low_confidence": self.low_confidence}


@dataclass(frozen=True)
class FactorSet:
    k: int
    factors: tuple[str, ...]
    raw_response: str
    low_confidence: bool = False

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not 1 <= len(self.factors) <= self.k:
            raise ValueError(f"expected 1..{self.k} factors, got {len(self.factors)}")
        if any(not f or "\n" in f for f in self.factors):
            raise ValueError("factors must be non-empty single lines")

    def to_dict(self) -> dict:
        return {"k": self.k, "factors": list(self.factors), "raw_response": self.raw_response,
                "low_confidence": self.low_confidence}

    @classmethod
    def from_dict(cls, d: dict) -> "FactorSet":
        return cls(int(d["k"]), tuple(d["factors"]), d.get("raw_response", ""), bool(d.get("low_confidence")))


@dataclass
class PromptBundle:
    record_ref: tuple[str, str]
    layer: Layer
    relation_prompts: list[str] = field(default_factory=list)
    relation_responses: list[str] = field(default_factory=list)
    factor_prompt: Optional[str] = None
    factor_response: Optional[str] = None
    price_prompt: Optional[str] = None
    price_response: Optional[str] = None
    news_truncated: bool = False
    error: Optional[str] = None

    def check_layer(self) -> None:
        """Raise ``ValueError`` when the stored stages do not match the layer."""
        if not self.layer.uses_relations and (self.relation_prompts or self.relation_responses):
            raise ValueError(f"{self.layer.value} bundle must not contain relation prompts")
        if not self.layer.uses_factors and (self.factor_prompt is not None or self.factor_response is not None):
            raise ValueError(f"{self.layer.value} bundle must not contain a factor prompt")
        if len(self.relation_prompts) < len(self.relation_responses):
            raise ValueError("more relation responses than prompts")
        if self.error is None:
            if self.layer.uses_factors and self.factor_prompt is None:
                raise ValueError(f"{self.layer.value} bundle is missing its factor prompt")
            if self.price_prompt is None:
                raise ValueError("bundle is missing its price prompt")

    def to_dict(self) -> dict:
        return {
            "ticker": self.record_ref[0],
            "date": self.record_ref[1],
            "layer": self.layer.value,
            "relation_prompts": list(self.relation_prompts),
            "relation_responses": list(self.relation_responses),
            "factor_prompt": self.factor_prompt,
            "factor_response": self.factor_response,
            "price_prompt": self.price_prompt,
            "price_response": self.price_response,
            "news_truncated": self.news_truncated,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PromptBundle":
        return cls((d["ticker"], d["date"]), Layer(d["layer"]), list(d["relation_prompts"]),
                   list(d["relation_responses"]), d["factor_prompt"], d["factor_response"],
                   d["price_prompt"], d["price_response"], bool(d["news_truncated"]), d["error"])


@dataclass(frozen=True)
class PredictionRecord:
    record_ref: tuple[str, str]
    direction: Optional[Direction]  # None = parse failure
    rationale: str
    gold: Direction
    layer: Layer
    model_id: str
    factors: Optional[FactorSet] = None
    relations: tuple[RelationFinding, ...] = ()

    @property
    def ticker(self) -> str:
        return self.record_ref[0]

    @property
    def date(self) -> dt.date:
        return dt.date.fromisoformat(self.record_ref[1])

    def to_dict(self) -> dict:
        return {
            "ticker": self.record_ref[0],
            "date": self.record_ref[1],
            "layer": self.layer.value,
            "model_id": self.model_id,
            "gold": self.gold.value,
            "direction": self.direction.value if self.direction else None,
            "rationale": self.rationale,
            "factors": self.factors.to_dict() if self.factors else None,
            "relations": [r.to_dict() for r in self.relations],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionRecord":
        def stock(ticker: str) -> StockEntry:
            return StockEntry(ticker, ticker)

        rel = tuple(
            RelationFinding(stock(r["target"]), stock(r["peer"]), r["relation"], r["raw_response"],
                            bool(r.get("low_confidence")))
            for r in d.get("relations", ())
        )
        return cls(
            record_ref=(d["ticker"], d["date"]),
            direction=Direction(d["direction"]) if d.get("direction") else None,
            rationale=d.get("rationale", ""),
            gold=Direction(d["gold"]),
            layer=Layer(d["layer"]),
            model_id=d.get("model_id", ""),
            factors=FactorSet.from_dict(d["factors"]) if d.get("factors") else None,
            relations=rel,
        )


# --------------------------------------------------------------------------- rendering

def render_relation_prompt(tpl: PromptTemplateSet, target: StockEntry, peer: StockEntry) -> str:
    if peer.ticker == target.ticker:
        raise TemplateError("relation prompt needs two different stocks")
    return fill(tpl.relation_template, target=target.company, peer=peer.company)


def render_factor_prompt(tpl: PromptTemplateSet, target: StockEntry, k: int, news_blob: str) -> str:
    if k < 1:
        raise TemplateError("k must be >= 1")
    if not news_blob or not news_blob.strip():
        raise TemplateError("news blob is empty")
    return fill(tpl.factor_template, target=target.company, k=k, news=news_blob)


def _strip_terminal(s: str) -> str:
    s = " ".join(s.split())
    return s[:-1].rstrip() if s.endswith((".", "。")) else s


def render_price_prompt(
    tpl: PromptTemplateSet,
    target: StockEntry,
    relations: Sequence[str],
    factors: Sequence[str],
    movement_window: MovementWindow,
    target_date: dt.date,
) -> str:
    """Assemble the prediction prompt.

    Empty ``factors`` / ``relations`` drop their block, so the same function
    serves every ablation layer; an empty movement window (text-only datasets)
    drops the per-day lines.
    """
    if any(d >= target_date for d in movement_window.dates):
        raise TemplateError("movement dates must precede the target date")
    lines = [tpl.price_preamble]
    if factors:
        lines.append(fill(tpl.factor_block, factors=tpl.list_separator.join(_strip_terminal(f) for f in factors)))
    if relations:
        lines.append(fill(tpl.relation_block, relations=tpl.list_separator.join(_strip_terminal(r) for r in relations)))
    cn = tpl.language == "CN"
    for day, move in movement_window:
        word = move.cn if cn else move.past_tense
        lines.append(fill(tpl.time_template, date=day.isoformat(), target=target.company, movement=word))
    lines.append(fill(tpl.price_conclusion, date=target_date.isoformat(), target=target.company))
    return "\n".join(lines)


# --------------------------------------------------------------------------- parsing

_REL_EN = re.compile(r"\bin an?\s+(.+?)\s+relationship", re.IGNORECASE)
_REL_CN = re.compile(r"(?:最可能是|可能是)(.+?)关系")
_LIST_LINE = re.compile(r"^\s*(?:\d+\s*[.)、:：]|\(\d+\)|[-*•·])\s*(.+?)\s*$")
_SENTENCE_END = re.compile(r"(?<=[.!?。！？])\s*")
_FILL_EN = re.compile(r"\bwill\s+(?:be\s+)?[*_\"']*\s*(rise|fall)\b", re.IGNORECASE)
_BARE_EN = re.compile(r"\b(rise|fall)\b", re.IGNORECASE)
_FILL_CN = re.compile(r"将\s*[*_\"“]*\s*(上涨|下跌)")
_BARE_CN = re.compile(r"(上涨|下跌)")


def _clean(s: str) -> str:
    s = s.replace("**", "").replace("__", "")
    return " ".join(s.split()).strip(" \"'“”*_")


def parse_relation(response: str, target: StockEntry, peer: StockEntry, language: str = "EN") -> RelationFinding:
    text = response.strip()
    if not text:
        raise ParseFailure("empty relation response", response)
    rx = _REL_CN if language == "CN" else _REL_EN
    m = rx.search(text)
    low = m is None
    if m:
        relation = _clean(m.group(1))
    else:
        first = next(line for line in text.splitlines() if line.strip())
        relation = _clean(first).rstrip(".。!！")
    words = relation.split()
    if len(words) > MAX_RELATION_WORDS:
        relation = " ".join(words[:MAX_RELATION_WORDS])
        low = True
    if not relation:
        raise ParseFailure("no relation found", response)
    return RelationFinding(target, peer, relation, response, low)


def parse_factors(response: str, k: int) -> FactorSet:
    if k < 1:
        raise ValueError("k must be >= 1")
    items = []
    for line in response.splitlines():
        m = _LIST_LINE.match(line)
        if m:
            item = _clean(m.group(1))
            if item:
                items.append(item)
    low = False
    if not items:
        body = _clean(response)
        first = _SENTENCE_END.split(body, maxsplit=1)[0].strip() if body else ""
        if not first:
            raise ParseFailure("no factors found", response)
        items, low = [first], True
    return FactorSet(k, tuple(items[:k]), response, low)


def parse_direction(response: str, language: str = "EN") -> tuple[Direction, str]:
    """Return the predicted direction and the rationale text following it.

    A keyword in fill-in position ("will rise" / "将上涨") wins over bare
    mentions; otherwise the first bare keyword decides.
    """
    fill_rx, bare_rx = (_FILL_CN, _BARE_CN) if language == "CN" else (_FILL_EN, _BARE_EN)
    m = fill_rx.search(response) or bare_rx.search(response)
    if m is None:
        raise ParseFailure("no rise/fall keyword", response)
    direction = Direction.parse(m.group(1))
    rationale = response[m.end():].lstrip(" \t\r\n.。,，:：;；!！*_\"'").strip()
    return direction, rationale or response.strip()


# --------------------------------------------------------------------------- orchestration

def truncate_news(blob: str, budget: Optional[int]) -> tuple[str, bool]:
    if budget is None or len(blob) <= budget:
        return blob, False
    return blob[:budget], True


def run_skgp(
    record: DatasetRecord,
    registry: StockMatcher | Sequence[StockEntry],
    templates: PromptTemplateSet,
    backend: Backend,
    layer: Layer = Layer.PLUS_FACTOR_RELATION,
    k: int = 5,
    news_budget: Optional[int] = DEFAULT_NEWS_BUDGET,
    system_preamble: str = SYSTEM_PREAMBLE,
) -> tuple[PromptBundle, PredictionRecord]:
    matcher = registry if isinstance(registry, StockMatcher) else StockMatcher(registry)
    lang = templates.language
    target = record.target
    news, truncated = truncate_news(record.news_blob, news_budget)
    bundle = PromptBundle(record.ref, layer, news_truncated=truncated)
    relations: list[RelationFinding] = []
    factor_set: Optional[FactorSet] = None

    def failed(reason: str) -> tuple[PromptBundle, PredictionRecord]:
        bundle.error = reason
        pred = PredictionRecord(record.ref, None, reason, record.gold, layer, backend.model_id,
                                factor_set, tuple(relations))
        return bundle, pred

    try:
        if layer.uses_relations:
            for peer in matcher.match(news, target).matched:
                prompt = render_relation_prompt(templates, target, peer)
                bundle.relation_prompts.append(prompt)
                answer = backend.complete(system_preamble, prompt).text
                bundle.relation_responses.append(answer)
                try:
                    relations.append(parse_relation(answer, target, peer, lang))
                except ParseFailure:
                    pass
        if layer.uses_factors:
            bundle.factor_prompt = render_factor_prompt(templates, target, k, news)
            bundle.factor_response = backend.complete(system_preamble, bundle.factor_prompt).text
            try:
                factor_set = parse_factors(bundle.factor_response, k)
            except ParseFailure:
                factor_set = None
        bundle.price_prompt = render_price_prompt(
            templates,
            target,
            [r.raw_response for r in relations],
            factor_set.factors if factor_set else (),
            record.movements,
            record.target_date,
        )
        bundle.price_response = backend.complete(system_preamble, bundle.price_prompt).text
    except BackendError as e:
        return failed(f"backend error: {e}")

    try:
        direction, rationale = parse_direction(bundle.price_response, lang)
    except ParseFailure:
        direction, rationale = None, bundle.price_response.strip()
    pred = PredictionRecord(record.ref, direction, rationale, record.gold, layer, backend.model_id,
                            factor_set, tuple(relations))
    return bundle, pred
