"""Dataset adapters, the stock registry and the canonical JSONL record format.

Two native layouts are understood:

* per-stock directories (StockNet, CMIN-US, CMIN-CN)::

      root/price/raw/<TICKER>.csv            Date,...,Close,... (one row per trading day)
      root/tweet/raw/<TICKER>/<YYYY-MM-DD>   JSON lines with a "text" field
                                             (also tweet/preprocessed, news/raw, news/preprocessed)
      root/stocks.csv                        optional registry (company,ticker,industry)

* an EDT article table: ``root/evaluate_news.json`` (a JSON list, or ``.jsonl``)
  where each article carries ``pub_time``, ``title``/``text`` and a ``labels`` dict
  with ``ticker``, ``start_price_open`` and ``end_price_1day``.

Every emitted record goes through :class:`DatasetRecord` validation. Samples that
cannot be built are skipped and tallied in :class:`LoadStats`, never imputed.
"""

from __future__ import annotations

import bisect
import csv
import datetime as dt
import json
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .core import EMPTY_MOVEMENTS, Direction, MovementWindow, PriceWindow, StockEntry, label_movements
from .errors import AlignmentError, ConfigError, IngestError, InsufficientHistory, RegistryFormatError

NEWS_SEPARATOR = "\n\n"


@dataclass(frozen=True)
class NewsItem:
    date: dt.date
    text: str
    source_id: str = ""

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("news text must be non-empty")
        if not isinstance(self.date, dt.date):
            raise ValueError(f"invalid news date {self.date!r}")


@dataclass(frozen=True)
class DatasetRecord:
    target: StockEntry
    target_date: dt.date
    news: tuple[NewsItem, ...]
    history: PriceWindow
    gold: Direction

    def __post_init__(self):
        object.__setattr__(self, "news", tuple(self.news))
        if not self.news:
            raise ValueError("record needs at least one news item")
        if any(n.date != self.target_date for n in self.news):
            raise ValueError("all news must be dated on the target date")
        if len(self.history) == 1:
            raise ValueError("history needs at least 2 closes (or none for text-only datasets)")
        if self.history.dates and self.history.dates[-1] >= self.target_date:
            raise ValueError("history must end strictly before the target date")

    @property
    def ref(self) -> tuple[str, str]:
        return (self.target.ticker, self.target_date.isoformat())

    @property
    def movements(self) -> MovementWindow:
        if len(self.history) == 0:
            return EMPTY_MOVEMENTS
        return label_movements(self.history)

    @property
    def news_blob(self) -> str:
        return NEWS_SEPARATOR.join(n.text.strip() for n in self.news)

    def to_dict(self) -> dict:
        return {
            "stock": self.target.to_dict(),
            "date": self.target_date.isoformat(),
            "news": [{"date": n.date.isoformat(), "text": n.text, "source_id": n.source_id} for n in self.news],
            "closes": list(self.history.closes),
            "close_dates": [d.isoformat() for d in self.history.dates],
            "gold": self.gold.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DatasetRecord":
        s = d["stock"]
        return cls(
            target=StockEntry(s["company"], s["ticker"], s.get("industry", "")),
            target_date=dt.date.fromisoformat(d["date"]),
            news=tuple(NewsItem(dt.date.fromisoformat(n["date"]), n["text"], n.get("source_id", "")) for n in d["news"]),
            history=PriceWindow(tuple(dt.date.fromisoformat(x) for x in d["close_dates"]), tuple(d["closes"])),
            gold=Direction(d["gold"]),
        )


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    language: str  # "EN" | "CN"
    has_timeseries: bool
    record_count: int  # full-corpus size as published

    def __post_init__(self):
        if self.language not in ("EN", "CN"):
            raise ValueError(f"unknown language {self.language!r}")


MANIFESTS: dict[str, DatasetManifest] = {
    "stocknet": DatasetManifest("StockNet", "EN", True, 19_318),
    "cmin-us": DatasetManifest("CMIN-US", "EN", True, 83_553),
    "cmin-cn": DatasetManifest("CMIN-CN", "CN", True, 198_781),
    "edt": DatasetManifest("EDT", "EN", False, 54_080),
}


def get_manifest(name: str | DatasetManifest) -> DatasetManifest:
    if isinstance(name, DatasetManifest):
        return name
    key = name.strip().lower()
    for k, m in MANIFESTS.items():
        if key in (k, m.name.lower()):
            return m
    raise ConfigError(f"unknown dataset {name!r}; expected one of {sorted(MANIFESTS)}")


@dataclass
class LoadStats:
    emitted: int = 0
    skipped: Counter = field(default_factory=Counter)

    @property
    def n_skipped(self) -> int:
        return sum(self.skipped.values())


# --------------------------------------------------------------------------- registry

def load_stock_registry(path: str | os.PathLike) -> list[StockEntry]:
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as e:
        raise IngestError(path, str(e)) from e
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise RegistryFormatError("empty registry file", line=1)
        cols = [h.strip().lower() for h in header]
        if cols[:3] != ["company", "ticker", "industry"]:
            raise RegistryFormatError(f"expected header company,ticker,industry, got {header}", line=1)
        entries: list[StockEntry] = []
        seen: dict[str, int] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise RegistryFormatError("missing ticker column", line=lineno)
            company, ticker = row[0].strip(), row[1].strip()
            industry = row[2].strip() if len(row) > 2 else ""
            if not ticker:
                raise RegistryFormatError("missing ticker", line=lineno)
            if ticker in seen:
                raise RegistryFormatError(f"duplicate ticker {ticker} (first on line {seen[ticker]})", line=lineno)
            try:
                entries.append(StockEntry(company, ticker, industry))
            except ValueError as e:
                raise RegistryFormatError(str(e), line=lineno) from e
            seen[ticker] = lineno
    if not entries:
        raise RegistryFormatError("registry has no rows", line=1)
    return entries


# --------------------------------------------------------------------------- windows

def make_windows(
    prices_by_date: Mapping[dt.date, float],
    target_date: dt.date,
    t: int = 5,
    stock: str = "",
) -> PriceWindow:
    """Last ``t + 1`` trading-day closes strictly before ``target_date``.

    A weekend or holiday ``target_date`` is fine: the window just ends on the
    last trading day before it.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    days = sorted(prices_by_date)
    end = bisect.bisect_left(days, target_date)
    if end < t + 1:
        raise InsufficientHistory(f"{stock or '?'} @ {target_date}: need {t + 1} trading days, have {end}")
    chosen = days[end - t - 1:end]
    return PriceWindow(tuple(chosen), tuple(prices_by_date[d] for d in chosen))


# --------------------------------------------------------------------------- canonical JSONL

def record_to_json(record: DatasetRecord) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False, separators=(",", ":"))


def write_jsonl(records: Iterable[DatasetRecord], path: str | os.PathLike) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(record_to_json(r) + "\n")
            n += 1
    return n


def read_jsonl(path: str | os.PathLike) -> Iterator[DatasetRecord]:
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise IngestError(path, str(e)) from e
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield DatasetRecord.from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as e:
                raise IngestError(path, f"line {lineno}: {e}") from e


# --------------------------------------------------------------------------- native adapters

_PRICE_DIRS = ("price/raw", "price")
_TEXT_DIRS = ("tweet/raw", "tweet/preprocessed", "news/raw", "news/preprocessed", "tweet", "news")


def _parse_date(s: str) -> dt.date:
    s = s.strip()
    return dt.date.fromisoformat(s[:10])


def read_price_csv(path: Path, stock: str) -> dict[dt.date, float]:
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as e:
        raise IngestError(path, str(e)) from e
    prices: dict[dt.date, float] = {}
    last: Optional[dt.date] = None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError(path, "empty price file")
        fields = {f.strip().lower(): f for f in reader.fieldnames}
        date_col = fields.get("date")
        close_col = fields.get("close") or fields.get("adj close")
        if date_col is None or close_col is None:
            raise IngestError(path, "price file needs Date and Close columns")
        for row in reader:
            try:
                d = _parse_date(row[date_col])
                c = float(row[close_col])
            except (ValueError, TypeError) as e:
                raise IngestError(path, f"bad price row {row}: {e}") from e
            if last is not None and d <= last:
                raise AlignmentError(stock, d)
            prices[d] = c
            last = d
    return prices


def _read_text_file(path: Path, day: dt.date) -> list[NewsItem]:
    items = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise IngestError(path, str(e)) from e
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        source = f"{path.name}:{i + 1}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            obj = line
        if isinstance(obj, dict):
            text = obj.get("text", "")
            if isinstance(text, list):
                text = " ".join(str(tok) for tok in text)
            source = str(obj.get("id_str") or obj.get("id") or source)
        else:
            text = str(obj)
        if text.strip():
            items.append(NewsItem(day, text.strip(), source))
    return items


def _text_index(stock_dir: Path) -> dict[dt.date, list[Path]]:
    out: dict[dt.date, list[Path]] = {}
    for p in sorted(stock_dir.iterdir()):
        if not p.is_file():
            continue
        try:
            d = _parse_date(p.name.split(".")[0] if len(p.name) > 10 and p.name[10] == "." else p.name)
        except ValueError:
            continue
        out.setdefault(d, []).append(p)
    return out


def _registry_for(root: Path, registry: Optional[Sequence[StockEntry]]) -> dict[str, StockEntry]:
    if registry is None:
        candidate = root / "stocks.csv"
        registry = load_stock_registry(candidate) if candidate.exists() else []
    return {s.ticker: s for s in registry}


def _load_per_stock(
    root: Path,
    manifest: DatasetManifest,
    registry: Optional[Sequence[StockEntry]],
    t: int,
    stats: LoadStats,
) -> Iterator[DatasetRecord]:
    price_dir = next((root / d for d in _PRICE_DIRS if (root / d).is_dir()), None)
    text_dir = next((root / d for d in _TEXT_DIRS if (root / d).is_dir()), None)
    if price_dir is None or text_dir is None:
        raise IngestError(root, f"{manifest.name} layout needs price/ and tweet/ (or news/) directories")
    by_ticker = _registry_for(root, registry)
    for price_file in sorted(price_dir.glob("*.csv")):
        ticker = price_file.stem
        stock = by_ticker.get(ticker)
        if stock is None:
            try:
                stock = StockEntry(ticker, ticker, "")
            except ValueError as e:
                raise IngestError(price_file, str(e)) from e
        prices = read_price_csv(price_file, ticker)
        days = sorted(prices)
        news_files = _text_index(text_dir / ticker) if (text_dir / ticker).is_dir() else {}
        for i in range(t + 1, len(days)):
            day = days[i]
            files = news_files.get(day)
            news = [item for f in files for item in _read_text_file(f, day)] if files else []
            if not news:
                stats.skipped["no_news"] += 1
                continue
            window = make_windows(prices, day, t, ticker)
            gold = Direction.RISE if prices[day] > window.closes[-1] else Direction.FALL
            stats.emitted += 1
            yield DatasetRecord(stock, day, tuple(news), window, gold)


def _iter_edt_articles(root: Path) -> Iterator[dict]:
    if root.is_file():
        candidates = [root]
    else:
        candidates = [p for p in (root / "evaluate_news.json", root / "evaluate_news.jsonl") if p.exists()]
    if not candidates:
        raise IngestError(root, "EDT layout needs evaluate_news.json")
    path = candidates[0]
    try:
        raw = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise IngestError(path, str(e)) from e
    if path.suffix == ".jsonl":
        for line in raw.splitlines():
            if line.strip():
                yield json.loads(line)
    else:
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as e:
            raise IngestError(path, str(e)) from e
        yield from data


def _load_edt(
    root: Path,
    registry: Optional[Sequence[StockEntry]],
    stats: LoadStats,
) -> Iterator[DatasetRecord]:
    by_ticker = _registry_for(root if root.is_dir() else root.parent, registry)
    empty = PriceWindow((), ())
    for i, art in enumerate(_iter_edt_articles(root)):
        labels = art.get("labels") or {}
        ticker = str(labels.get("ticker", "")).strip().upper()
        body = "\n".join(s.strip() for s in (art.get("title", ""), art.get("text", "")) if s and s.strip())
        if not body:
            stats.skipped["no_news"] += 1
            continue
        try:
            day = _parse_date(str(art["pub_time"]))
            start = float(labels["start_price_open"])
            end = float(labels["end_price_1day"])
        except (KeyError, ValueError, TypeError):
            stats.skipped["no_label"] += 1
            continue
        try:
            stock = by_ticker.get(ticker) or StockEntry(ticker, ticker, "")
        except ValueError:
            stats.skipped["bad_ticker"] += 1
            continue
        gold = Direction.RISE if end > start else Direction.FALL
        stats.emitted += 1
        yield DatasetRecord(stock, day, (NewsItem(day, body, str(art.get("id", i))),), empty, gold)


def load_dataset(
    manifest: str | DatasetManifest,
    root: str | os.PathLike,
    registry: Optional[Sequence[StockEntry]] = None,
    t: int = 5,
    stats: Optional[LoadStats] = None,
) -> Iterator[DatasetRecord]:
    """Stream canonical records from a dataset's native layout.

    Pass a :class:`LoadStats` to collect emitted/skipped tallies; the counts are
    final once the iterator is exhausted.
    """
    manifest = get_manifest(manifest)
    root = Path(root)
    if not root.exists():
        raise IngestError(root, "dataset root does not exist")
    stats = stats if stats is not None else LoadStats()
    if manifest.has_timeseries:
        yield from _load_per_stock(root, manifest, registry, t, stats)
    else:
        yield from _load_edt(root, registry, stats)
