"""Find registry stocks mentioned in a news blob.

A registry entry matches when

* its ticker appears as a whole, case-sensitive token (``NVDA``, ``$NVDA``), or
* its company name (or a suffix-stripped form, or an alias) appears
  case-insensitively on word boundaries.

Tickers that double as English words or are a single letter (``A``, ``IT``,
``ALL`` ...) only count as cashtags (``$A``) or in explicit ticker context such
as ``(A)`` or ``NYSE: A``.
"""

from __future__ import annotations

import csv
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .core import StockEntry
from .errors import ConfigError

AMBIGUOUS_TICKERS = frozenset("""
A ALL AN ARE AT BE BIG BY CAN CAR CAT DO EAT EDIT FAST FIVE FOR FUN GAIN GO GOOD HAS HE HOME
HOPE IT JOB KEY LAND LIFE LOVE LOW MAIN MAN MOVE NEW NEXT NICE NOW ON ONE OPEN OR OUT PEAK
PLAY PM RE REAL RUN SAFE SEE SHOP SITE SO TECH TRUE TV TWO UP WELL WORK YOU
""".split())

_LATIN_SUFFIXES = re.compile(
    r"(?:,?\s+(?:inc\.?|incorporated|corp\.?|corporation|co\.?|company|ltd\.?|limited|plc|llc|"
    r"l\.p\.|lp|n\.v\.|s\.a\.|ag|se|holdings?|group|class [a-c]))+$",
    re.IGNORECASE,
)
_CN_SUFFIXES = re.compile(r"(?:集团)?(?:股份)?有限(?:责任)?公司$|集团$")
_CJK = re.compile(r"[㐀-鿿]")
_WORD = re.compile(r"[0-9A-Za-z]+")
_TICKER_TOKEN = re.compile(r"(?<![0-9A-Za-z$])(\$?)([A-Z0-9][A-Z0-9.\-]*[A-Z0-9]|[A-Z0-9])(?![0-9A-Za-z])")
_TICKER_CONTEXT = re.compile(r"(?:\((?:(?:NYSE|NASDAQ|Nasdaq|NYSEARCA|AMEX)\s*:\s*)?|(?:NYSE|NASDAQ|Nasdaq|AMEX)\s*:\s*)$")


@dataclass(frozen=True)
class MatchResult:
    target: StockEntry
    matched: tuple[StockEntry, ...]
    evidence: tuple[tuple[tuple[str, int], ...], ...]  # aligned with ``matched``


def normalize_company(name: str) -> str:
    """Strip legal-form suffixes ("Inc.", "Corp.", "股份有限公司" ...) and a leading "The"."""
    name = name.strip()
    if _CJK.search(name):
        return _CN_SUFFIXES.sub("", name).strip()
    name = re.sub(r"^the\s+", "", name, flags=re.IGNORECASE)
    return _LATIN_SUFFIXES.sub("", name).strip(" ,")


def is_ambiguous_ticker(ticker: str) -> bool:
    return len(ticker) == 1 or ticker in AMBIGUOUS_TICKERS


def load_aliases(path: str | os.PathLike) -> dict[str, list[str]]:
    """Read a ``ticker,alias`` CSV (header optional)."""
    out: dict[str, list[str]] = {}
    with open(Path(path), newline="", encoding="utf-8-sig") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip():
                continue
            if i == 0 and [c.strip().lower() for c in row[:2]] == ["ticker", "alias"]:
                continue
            if len(row) < 2 or not row[1].strip():
                raise ConfigError(f"{path}: line {i + 1}: expected ticker,alias")
            out.setdefault(row[0].strip(), []).append(row[1].strip())
    return out


class StockMatcher:
    """Compiled registry index; build once and share across threads (read-only)."""

    def __init__(self, registry: Sequence[StockEntry], aliases: Optional[Mapping[str, Iterable[str]]] = None):
        if not registry:
            raise ConfigError("registry is empty")
        self.registry = tuple(registry)
        self.by_ticker = {s.ticker: s for s in self.registry}
        aliases = aliases or {}
        # first lower-cased word -> [(name tokens, canonical lower form, ticker)]
        self._latin: dict[str, list[tuple[tuple[str, ...], str, str]]] = {}
        self._cjk: list[tuple[str, str]] = []
        for s in self.registry:
            forms = {s.company.strip(), normalize_company(s.company)}
            forms.update(a for a in aliases.get(s.ticker, ()))
            for form in forms:
                self._add_name(form, s.ticker)

    def _add_name(self, form: str, ticker: str) -> None:
        form = " ".join(form.split())
        if not form:
            return
        if _CJK.search(form):
            if len(form) >= 2:
                self._cjk.append((form, ticker))
            return
        tokens = tuple(w.lower() for w in _WORD.findall(form))
        if not tokens or len(form) < 2:
            return
        entry = (tokens, form.lower(), ticker)
        bucket = self._latin.setdefault(tokens[0], [])
        if entry not in bucket:
            bucket.append(entry)

    def _ticker_hits(self, text: str):
        for m in _TICKER_TOKEN.finditer(text):
            cashtag, tok = m.group(1), m.group(2)
            if tok not in self.by_ticker:
                continue
            if is_ambiguous_ticker(tok) and not cashtag and not _TICKER_CONTEXT.search(text[:m.start()]):
                continue
            yield tok, m.group(0), m.start()

    def _name_hits(self, text: str):
        words = list(_WORD.finditer(text))
        lowered = [w.group(0).lower() for w in words]
        for i, w in enumerate(lowered):
            for tokens, canon, ticker in self._latin.get(w, ()):
                j = i + len(tokens)
                if j > len(words) or tuple(lowered[i:j]) != tokens:
                    continue
                start, end = words[i].start(), words[j - 1].end()
                # include trailing dots that are part of the name ("Inc.")
                if canon.endswith(".") and text[end:end + 1] == ".":
                    end += 1
                surface = text[start:end]
                if " ".join(surface.split()).lower() != canon:
                    continue
                if start > 0 and text[start - 1].isalnum() or end < len(text) and text[end].isalnum():
                    continue
                yield ticker, surface, start
        for form, ticker in self._cjk:
            pos = text.find(form)
            while pos != -1:
                yield ticker, form, pos
                pos = text.find(form, pos + 1)

    def match(self, news_text: str, target: StockEntry) -> MatchResult:
        hits: dict[str, list[tuple[str, int]]] = {}
        for ticker, surface, offset in (*self._ticker_hits(news_text), *self._name_hits(news_text)):
            ev = hits.setdefault(ticker, [])
            if (surface, offset) not in ev:
                ev.append((surface, offset))
        hits.pop(target.ticker, None)
        ordered = sorted(hits, key=lambda tk: (min(o for _, o in hits[tk]), tk))
        return MatchResult(
            target=target,
            matched=tuple(self.by_ticker[tk] for tk in ordered),
            evidence=tuple(tuple(sorted(hits[tk], key=lambda e: (e[1], e[0]))) for tk in ordered),
        )


def match_stocks(news_text: str, registry: Sequence[StockEntry] | StockMatcher, target: StockEntry) -> MatchResult:
    matcher = registry if isinstance(registry, StockMatcher) else StockMatcher(registry)
    if target.ticker not in matcher.by_ticker:
        raise ConfigError(f"target {target.ticker} is not in the registry")
    return matcher.match(news_text, target)
