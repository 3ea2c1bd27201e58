"""Keyphrase-lexicon scoring and sentiment-label baselines.

Keyphrase extraction itself happens elsewhere; this module consumes ranked
phrase lists (``ticker,phrase,rank`` CSV, one file per label subset) and scores
texts by which positive and negative phrases they contain.
"""

from __future__ import annotations

import csv
import decimal
import os
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .core import Direction
from .errors import ConfigError, ParseFailure

GLOBAL_SCOPE = "*"

_CJK = re.compile(r"[㐀-鿿]")


_CTX = decimal.Context(prec=40)


def sigmoid(x: float) -> float:
    """Logistic function, correctly rounded to double precision.

    The float expression ``1 / (1 + exp(-x))`` rounds twice and can land one
    ulp away; scores are compared bit-for-bit across runs, so evaluate in 40 digits.
    """
    e = _CTX.exp(_CTX.minus(decimal.Decimal(x)))
    return float(_CTX.divide(1, _CTX.add(1, e)))


def _norm(phrase: str) -> str:
    return " ".join(phrase.split()).lower()


@dataclass(frozen=True)
class KeyphraseLexicon:
    pos: frozenset[str]
    neg: frozenset[str]
    scope: str = GLOBAL_SCOPE  # a ticker, or "*" for all stocks
    allow_overlap: bool = False

    def __post_init__(self):
        object.__setattr__(self, "pos", frozenset(_norm(p) for p in self.pos if p.strip()))
        object.__setattr__(self, "neg", frozenset(_norm(p) for p in self.neg if p.strip()))
        overlap = self.pos & self.neg
        if overlap:
            if not self.allow_overlap:
                raise ConfigError(f"phrases in both POS and NEG for {self.scope}: {sorted(overlap)}")
            warnings.warn(f"{len(overlap)} phrase(s) in both POS and NEG for {self.scope}: {sorted(overlap)}",
                          stacklevel=3)

    def __len__(self) -> int:
        return len(self.pos) + len(self.neg)

    def swapped(self) -> "KeyphraseLexicon":
        return KeyphraseLexicon(self.neg, self.pos, self.scope, allow_overlap=True)


def phrase_in_text(phrase: str, text: str) -> bool:
    """Case-insensitive containment on word boundaries (plain substring for CJK phrases)."""
    phrase = _norm(phrase)
    if not phrase:
        return False
    if _CJK.search(phrase):
        return phrase in text.lower()
    pattern = r"(?<!\w)" + r"\s+".join(re.escape(w) for w in phrase.split()) + r"(?!\w)"
    return re.search(pattern, text, re.IGNORECASE) is not None


def keyphrase_score(text: str, lexicon: KeyphraseLexicon) -> float:
    if len(lexicon) == 0:
        raise ConfigError("lexicon is empty")
    hits = sum(phrase_in_text(p, text) for p in lexicon.pos) - sum(phrase_in_text(n, text) for n in lexicon.neg)
    return sigmoid(hits)


def keyphrase_direction(score: float, threshold: float = 0.5) -> Direction:
    return Direction.RISE if score > threshold else Direction.FALL


def read_keyphrase_file(path: str | os.PathLike) -> dict[str, list[tuple[int, str]]]:
    """``ticker,phrase,rank`` rows grouped by ticker; header optional."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"keyphrase file not found: {path}")
    out: dict[str, list[tuple[int, str]]] = {}
    with open(path, newline="", encoding="utf-8-sig") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and [c.strip().lower() for c in row[:3]] == ["ticker", "phrase", "rank"]:
                continue
            if len(row) < 2:
                raise ConfigError(f"{path}: line {lineno}: expected ticker,phrase[,rank]")
            try:
                rank = int(row[2]) if len(row) > 2 and row[2].strip() else lineno
            except ValueError as e:
                raise ConfigError(f"{path}: line {lineno}: bad rank {row[2]!r}") from e
            out.setdefault(row[0].strip() or GLOBAL_SCOPE, []).append((rank, row[1]))
    return out


def build_lexicons(
    pos_path: str | os.PathLike,
    neg_path: str | os.PathLike,
    k: int = 5,
    per_stock: bool = True,
    allow_overlap: bool = True,
) -> dict[str, KeyphraseLexicon]:
    """Top-``k`` phrases per stock from the rise-labelled (POS) and fall-labelled (NEG) subsets.

    The phrase files must come from training data only; nothing here can tell
    whether evaluation records leaked into them.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    pos, neg = read_keyphrase_file(pos_path), read_keyphrase_file(neg_path)

    def top(rows: list[tuple[int, str]], n: Optional[int]) -> list[str]:
        seen: list[str] = []
        for _, phrase in sorted(rows, key=lambda r: r[0]):
            p = _norm(phrase)
            if p and p not in seen:
                seen.append(p)
        return seen[:n] if n else seen

    if not per_stock:
        all_pos = [r for rows in pos.values() for r in rows]
        all_neg = [r for rows in neg.values() for r in rows]
        return {GLOBAL_SCOPE: KeyphraseLexicon(frozenset(top(all_pos, None)), frozenset(top(all_neg, None)),
                                               GLOBAL_SCOPE, allow_overlap)}
    out = {}
    for ticker in sorted(set(pos) | set(neg)):
        out[ticker] = KeyphraseLexicon(frozenset(top(pos.get(ticker, []), k)),
                                       frozenset(top(neg.get(ticker, []), k)), ticker, allow_overlap)
    return out


def check_split(
    train_refs: Optional[Iterable[tuple[str, str]]],
    eval_refs: Iterable[tuple[str, str]],
) -> set[tuple[str, str]]:
    """Warn when the records behind the phrase lists overlap the evaluation set.

    ``train_refs`` are the ``(ticker, date)`` records the POS/NEG subsets were
    built from; ``None`` means the caller did not declare them, which also warns.
    Returns the overlapping refs.
    """
    if train_refs is None:
        warnings.warn("keyphrase training split not declared; cannot rule out label leakage", stacklevel=2)
        return set()
    overlap = set(map(tuple, train_refs)) & set(map(tuple, eval_refs))
    if overlap:
        warnings.warn(f"{len(overlap)} evaluation record(s) also built the keyphrase lexicons, "
                      f"e.g. {sorted(overlap)[:3]}", stacklevel=2)
    return overlap


def lexicon_for(lexicons: Mapping[str, KeyphraseLexicon], ticker: str) -> Optional[KeyphraseLexicon]:
    return lexicons.get(ticker) or lexicons.get(GLOBAL_SCOPE)


_SENTIMENT = {
    "positive": Direction.RISE,
    "pos": Direction.RISE,
    "积极": Direction.RISE,
    "正面": Direction.RISE,
    "negative": Direction.FALL,
    "neg": Direction.FALL,
    "消极": Direction.FALL,
    "负面": Direction.FALL,
    # neutral has no direction of its own; treated as "no rise"
    "neutral": Direction.FALL,
    "中性": Direction.FALL,
}


def sentiment_direction(sentiment_label: str) -> Direction:
    try:
        return _SENTIMENT[sentiment_label.strip().lower()]
    except (KeyError, AttributeError):
        raise ParseFailure(f"unknown sentiment label {sentiment_label!r}", str(sentiment_label)) from None
