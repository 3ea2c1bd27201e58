"""Generate the 40-record synthetic fixture used by the offline end-to-end tests.

Layout: 24 records whose 5-day history shows >= 3 rises and 16 with <= 2.
Gold follows the history majority on 18 + 12 = 30 records (ACC 0.75 for a
momentum predictor). Some windows contain unchanged closes, which label as falls.

    python scripts/make_fixture.py tests/fixtures
"""

import argparse
import datetime as dt
import random
from pathlib import Path

from llmfactor.core import Direction, PriceWindow, StockEntry
from llmfactor.ingest import DatasetRecord, NewsItem, write_jsonl

REGISTRY = [
    ("Apple Inc.", "AAPL", "Technology"),
    ("Microsoft Corporation", "MSFT", "Technology"),
    ("Nvidia", "NVDA", "Semiconductors"),
    ("Intel Corp.", "INTC", "Semiconductors"),
    ("Tesla, Inc.", "TSLA", "Automotive"),
    ("Ford Motor Company", "F", "Automotive"),
    ("Corning Incorporated", "GLW", "Materials"),
    ("Amazon.com, Inc.", "AMZN", "Retail"),
]

EVENTS = [
    "reported quarterly revenue above expectations",
    "announced a new product line",
    "faced supply chain delays",
    "expanded a share buyback program",
    "was downgraded by an analyst",
    "signed a multi-year supply agreement",
    "cut its full-year guidance",
    "opened a new manufacturing plant",
]


def weekdays_before(day: dt.date, n: int) -> list[dt.date]:
    out = []
    d = day
    while len(out) < n:
        d -= dt.timedelta(days=1)
        if d.weekday() < 5:
            out.append(d)
    return out[::-1]


def window_for(rises: int, rng: random.Random, flat: bool) -> list[float]:
    moves = [True] * rises + [False] * (5 - rises)
    rng.shuffle(moves)
    closes = [round(rng.uniform(20, 300), 2)]
    for i, up in enumerate(moves):
        step = round(rng.uniform(0.1, 3.0), 2)
        if not up and flat and i == 0:
            step = 0.0  # unchanged close: labels as a fall
        closes.append(round(closes[-1] + step if up else closes[-1] - step, 2))
    return closes


def build(seed: int = 2024) -> list[DatasetRecord]:
    rng = random.Random(seed)
    stocks = [StockEntry(*row) for row in REGISTRY]
    # (rises in history, gold) per record
    plan = (
        [(rng.choice([3, 4, 5]), Direction.RISE) for _ in range(18)]
        + [(rng.choice([3, 4, 5]), Direction.FALL) for _ in range(6)]
        + [(rng.choice([0, 1, 2]), Direction.FALL) for _ in range(12)]
        + [(rng.choice([0, 1, 2]), Direction.RISE) for _ in range(4)]
    )
    rng.shuffle(plan)
    start = dt.date(2019, 9, 9)
    records = []
    for i, (rises, gold) in enumerate(plan):
        stock = stocks[i % len(stocks)]
        day = start + dt.timedelta(weeks=i // len(stocks))
        closes = window_for(rises, rng, flat=(i % 5 == 0))
        dates = weekdays_before(day, 6)
        peers = [s for s in stocks if s.ticker != stock.ticker]
        peer = rng.choice(peers)
        name = stock.company.split(",")[0].replace(" Inc.", "").replace(" Corp.", "")
        text = f"{name} {rng.choice(EVENTS)}."
        if i % 4 != 3:
            text += f" Meanwhile {peer.company} {rng.choice(EVENTS)}."
        if i % 7 == 0:
            second = rng.choice([p for p in peers if p != peer])
            text += f" Investors also watched {second.company}."
        news = [NewsItem(day, text, f"fx-{i:03d}")]
        if i % 6 == 0:
            news.append(NewsItem(day, f"${stock.ticker} trading volume was heavy.", f"fx-{i:03d}b"))
        records.append(DatasetRecord(stock, day, tuple(news), PriceWindow(tuple(dates), tuple(closes)), gold))
    return sorted(records, key=lambda r: r.ref)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    n = write_jsonl(build(args.seed), args.out_dir / "momentum40.jsonl")
    with open(args.out_dir / "registry.csv", "w", encoding="utf-8") as fh:
        fh.write("company,ticker,industry\n")
        for company, ticker, industry in REGISTRY:
            fh.write(f"\"{company}\",{ticker},{industry}\n")
    print(f"wrote {n} records")


if __name__ == "__main__":
    main()
