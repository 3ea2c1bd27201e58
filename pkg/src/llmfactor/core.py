"""Domain types, movement labels and binary classification metrics.

Everything here is pure and immutable; no I/O.
"""

from __future__ import annotations

import datetime as dt
import enum
import math
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import EmptyEvaluation, InsufficientHistory

_TICKER_RE = re.compile(r"^[A-Z0-9][A-Z0-9.\-]*$")


class Direction(enum.Enum):
    RISE = "rise"
    FALL = "fall"

    @property
    def cn(self) -> str:
        return "上涨" if self is Direction.RISE else "下跌"

    @property
    def past_tense(self) -> str:
        return "rose" if self is Direction.RISE else "fell"

    def flip(self) -> "Direction":
        return Direction.FALL if self is Direction.RISE else Direction.RISE

    @classmethod
    def parse(cls, value: str) -> "Direction":
        v = value.strip().lower()
        if v in ("rise", "上涨", "1", "up"):
            return cls.RISE
        if v in ("fall", "下跌", "0", "down"):
            return cls.FALL
        raise ValueError(f"not a direction: {value!r}")


@dataclass(frozen=True)
class StockEntry:
    company: str
    ticker: str
    industry: str = ""

    def __post_init__(self):
        if not self.company or not self.company.strip():
            raise ValueError("company must be non-empty")
        if not _TICKER_RE.match(self.ticker):
            raise ValueError(f"invalid ticker {self.ticker!r}")

    def to_dict(self) -> dict:
        return {"company": self.company, "ticker": self.ticker, "industry": self.industry}


@dataclass(frozen=True)
class PriceWindow:
    dates: tuple[dt.date, ...]
    closes: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "closes", tuple(float(c) for c in self.closes))
        if len(self.dates) != len(self.closes):
            raise ValueError("dates and closes must align")
        if any(not c > 0 for c in self.closes):
            raise ValueError("closes must be positive")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")

    def __len__(self) -> int:
        return len(self.closes)


@dataclass(frozen=True)
class MovementWindow:
    dates: tuple[dt.date, ...]
    moves: tuple[Direction, ...]

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "moves", tuple(self.moves))
        if len(self.dates) != len(self.moves):
            raise ValueError("dates and moves must align")

    def __len__(self) -> int:
        return len(self.moves)

    def __iter__(self):
        return iter(zip(self.dates, self.moves))


EMPTY_MOVEMENTS = MovementWindow((), ())


def label_movements(window: PriceWindow) -> MovementWindow:
    """Turn t+1 closes into t rise/fall labels; an unchanged close counts as a fall."""
    if len(window) < 2:
        raise InsufficientHistory(f"need at least 2 closes, got {len(window)}")
    c = window.closes
    moves = tuple(Direction.RISE if c[i + 1] > c[i] else Direction.FALL for i in range(len(c) - 1))
    return MovementWindow(window.dates[1:], moves)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_matrix(self) -> list[list[int]]:
        return [[self.tp, self.fp], [self.fn, self.tn]]


def accuracy(m: ConfusionMatrix) -> float:
    if m.total == 0:
        raise EmptyEvaluation("accuracy of an empty confusion matrix")
    return (m.tp + m.tn) / m.total


def mcc(m: ConfusionMatrix) -> float:
    """Matthews correlation; 0.0 when any marginal is empty."""
    if m.total == 0:
        raise EmptyEvaluation("MCC of an empty confusion matrix")
    factors = (m.tp + m.fp, m.tp + m.fn, m.tn + m.fp, m.tn + m.fn)
    if 0 in factors:
        return 0.0
    num = m.tp * m.tn - m.fp * m.fn
    prod = factors[0] * factors[1] * factors[2] * factors[3]
    root = math.isqrt(prod)
    # exact root for perfect squares so that |mcc| == 1 comes out exactly
    den = root if root * root == prod else math.sqrt(prod)
    return num / den


@dataclass(frozen=True)
class EvalReport:
    matrix: ConfusionMatrix
    acc: float
    mcc: float
    n_parse_failures: int = 0
    label: str = ""
    dataset: str = ""

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "dataset": self.dataset,
            "matrix": {"tp": self.matrix.tp, "fp": self.matrix.fp, "fn": self.matrix.fn, "tn": self.matrix.tn},
            "acc": self.acc,
            "mcc": self.mcc,
            "n_parse_failures": self.n_parse_failures,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        m = ConfusionMatrix(**{k: int(d["matrix"][k]) for k in ("tp", "fp", "fn", "tn")})
        return cls(m, float(d["acc"]), float(d["mcc"]), int(d.get("n_parse_failures", 0)),
                   d.get("label", ""), d.get("dataset", ""))


def evaluate(
    pairs: Iterable[tuple[Direction, Optional[Direction]]],
    positive_class: Direction = Direction.RISE,
    label: str = "",
    dataset: str = "",
) -> EvalReport:
    """Score (gold, predicted) pairs. A predicted ``None`` is a parse failure and counts as wrong."""
    tp = fp = fn = tn = failures = 0
    for gold, pred in pairs:
        if pred is None:
            failures += 1
            pred = gold.flip()
        if pred is positive_class:
            if gold is positive_class:
                tp += 1
            else:
                fp += 1
        elif gold is positive_class:
            fn += 1
        else:
            tn += 1
    m = ConfusionMatrix(tp, fp, fn, tn)
    if m.total == 0:
        raise EmptyEvaluation("no pairs to evaluate")
    return EvalReport(m, accuracy(m), mcc(m), failures, label, dataset)

