import math
import re

import pytest
from hypothesis import given, strategies as st

from llmfactor.baselines import (
    KeyphraseLexicon,
    build_lexicons,
    check_split,
    keyphrase_direction,
    keyphrase_score,
    lexicon_for,
    phrase_in_text,
    sentiment_direction,
    sigmoid,
)
from llmfactor.core import Direction
from llmfactor.errors import ConfigError, ParseFailure

R, F = Direction.RISE, Direction.FALL


def test_sigmoid_values():
    assert sigmoid(0) == 0.5
    assert sigmoid(2) == pytest.approx(0.88080, abs=1e-5)
    assert sigmoid(-1) == pytest.approx(0.26894, abs=1e-5)


@pytest.mark.parametrize("x", range(-40, 41))
def test_sigmoid_correctly_rounded(x):
    import mpmath
    with mpmath.workdps(60):
        assert sigmoid(x) == float(1 / (1 + mpmath.e ** (-x)))


def test_score_spot_values():
    lex = KeyphraseLexicon(frozenset({"beat estimates", "record sales", "upgrade"}),
                           frozenset({"lawsuit", "recall"}))
    assert keyphrase_score("Record sales and an upgrade.", lex) == pytest.approx(0.88080, abs=1e-5)
    assert keyphrase_direction(keyphrase_score("Record sales and an upgrade.", lex)) is R
    assert keyphrase_score("Nothing notable.", lex) == 0.5
    assert keyphrase_direction(0.5) is F
    assert keyphrase_score("A lawsuit was filed.", lex) == pytest.approx(0.26894, abs=1e-5)
    assert keyphrase_direction(keyphrase_score("A lawsuit was filed.", lex)) is F


def test_phrase_matching_rules():
    assert phrase_in_text("beat estimates", "Apple BEAT\n estimates today")
    assert not phrase_in_text("upgrade", "upgraded")  # word boundary
    assert phrase_in_text("业绩增长", "公司业绩增长明显")
    assert not phrase_in_text("  ", "anything")


def test_each_phrase_counts_once():
    lex = KeyphraseLexicon(frozenset({"gain"}), frozenset({"loss"}))
    assert keyphrase_score("gain gain gain", lex) == sigmoid(1)


def test_empty_lexicon():
    with pytest.raises(ConfigError):
        keyphrase_score("text", KeyphraseLexicon(frozenset(), frozenset()))


def test_overlap_policy():
    with pytest.raises(ConfigError):
        KeyphraseLexicon(frozenset({"merger"}), frozenset({"merger"}))
    with pytest.warns(UserWarning):
        lex = KeyphraseLexicon(frozenset({"merger", "gain"}), frozenset({"merger"}), allow_overlap=True)
    # overlapping phrase cancels out
    assert keyphrase_score("merger news", lex) == 0.5


def write(path, rows, header=True):
    lines = (["ticker,phrase,rank"] if header else []) + [",".join(map(str, r)) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_build_lexicons(tmp_path):
    pos = write(tmp_path / "pos.csv", [("AAPL", "record sales", 1), ("AAPL", "upgrade", 2), ("AAPL", "beat", 3)]
                + [("MSFT", f"p{i}", i) for i in range(9, 0, -1)])
    neg = write(tmp_path / "neg.csv", [("AAPL", "lawsuit", 1), ("AAPL", "recall", 2)], header=False)
    lex = build_lexicons(pos, neg, k=5)
    assert (len(lex["AAPL"].pos), len(lex["AAPL"].neg)) == (3, 2)
    assert lex["MSFT"].pos == frozenset({"p1", "p2", "p3", "p4", "p5"})  # top by rank, not file order
    assert lexicon_for(lex, "TSLA") is None
    glob = build_lexicons(pos, neg, per_stock=False)
    assert len(glob["*"].pos) == 12 and lexicon_for(glob, "TSLA") is glob["*"]


def test_build_lexicons_overlap_warns(tmp_path):
    pos = write(tmp_path / "pos.csv", [("AAPL", "merger", 1)])
    neg = write(tmp_path / "neg.csv", [("AAPL", "Merger", 1)])
    with pytest.warns(UserWarning):
        build_lexicons(pos, neg)
    with pytest.raises(ConfigError):
        build_lexicons(pos, neg, allow_overlap=False)


def test_missing_lexicon_file(tmp_path):
    with pytest.raises(ConfigError):
        build_lexicons(tmp_path / "nope.csv", tmp_path / "nope2.csv")


def test_split_declaration():
    evals = [("AAPL", "2019-09-10"), ("AAPL", "2019-09-11")]
    with pytest.warns(UserWarning, match="not declared"):
        check_split(None, evals)
    with pytest.warns(UserWarning, match="1 evaluation record"):
        assert check_split([["AAPL", "2019-09-11"], ("MSFT", "2019-09-11")], evals) == {("AAPL", "2019-09-11")}
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert check_split([("AAPL", "2018-01-02")], evals) == set()


def test_sentiment_mapping():
    assert sentiment_direction("Positive") is R
    assert sentiment_direction("negative") is F
    assert sentiment_direction("neutral") is F
    assert sentiment_direction("积极") is R and sentiment_direction("中性") is F
    with pytest.raises(ParseFailure):
        sentiment_direction("bullish")


# --------------------------------------------------------------------------- properties

WORDS = ["gain", "loss", "beat", "miss", "upgrade", "downgrade", "recall", "merger", "record", "cut"]
phrases = st.lists(st.sampled_from(WORDS), min_size=1, max_size=2).map(" ".join)


@st.composite
def lexicon_and_text(draw):
    pos = draw(st.sets(phrases, max_size=5))
    neg = draw(st.sets(phrases, max_size=5).map(lambda s: s - pos))
    if not pos and not neg:
        pos = {"gain"}
    text = " ".join(draw(st.lists(st.sampled_from(WORDS + ["the", "and"]), max_size=25)))
    return KeyphraseLexicon(frozenset(pos), frozenset(neg)), text


def brute_score(text, lex):
    toks = text.lower().split()
    def present(p):
        w = p.split()
        return any(toks[i:i + len(w)] == w for i in range(len(toks) - len(w) + 1))
    s = sum(map(present, lex.pos)) - sum(map(present, lex.neg))
    return 1 / (1 + math.exp(-s))


@given(lexicon_and_text())
def test_score_matches_membership_oracle(case):
    lex, text = case
    assert keyphrase_score(text, lex) == pytest.approx(brute_score(text, lex), abs=1e-12)


@given(lexicon_and_text(), phrases)
def test_adding_positive_phrase_never_lowers_score(case, extra):
    lex, text = case
    bigger = KeyphraseLexicon(lex.pos | {extra}, lex.neg - {extra})
    if extra in lex.neg:
        return  # moving a phrase across sides is not monotone by construction
    assert keyphrase_score(text, bigger) >= keyphrase_score(text, lex)


@given(lexicon_and_text())
def test_swap_is_antisymmetric(case):
    lex, text = case
    assert keyphrase_score(text, lex) + keyphrase_score(text, lex.swapped()) == pytest.approx(1.0, abs=1e-12)


@given(lexicon_and_text())
def test_duplicating_text_is_invariant(case):
    lex, text = case
    assert keyphrase_score(text + " . " + text, lex) == keyphrase_score(text, lex)
