import datetime as dt
import random

import pytest

from llmfactor.core import Direction, MovementWindow, StockEntry, EMPTY_MOVEMENTS
from llmfactor.errors import TemplateError
from llmfactor.skgp import render_factor_prompt, render_price_prompt, render_relation_prompt
from llmfactor.templates import PromptTemplateSet, check_placeholders, default_templates, load_templates

from golden_frames import expected_factor, expected_price, expected_relation

EN, CN = default_templates("EN"), default_templates("CN")
NVDA = StockEntry("Nvidia", "NVDA")
INTC = StockEntry("Intel", "INTC")
AAPL = StockEntry("AAPL", "AAPL")
MOUTAI = StockEntry("贵州茅台", "600519.SH")
WLY = StockEntry("五粮液", "000858.SZ")


def window(start, moves):
    dates = [start + dt.timedelta(days=i) for i in range(len(moves))]
    return MovementWindow(tuple(dates), tuple(Direction(m) for m in moves))


def test_relation_prompt_en():
    assert render_relation_prompt(EN, NVDA, INTC) == (
        "Please fill in the blank and return a complete sentence: "
        "Nvidia and Intel are most likely in a ___ relationship.")


def test_relation_prompt_cn():
    assert render_relation_prompt(CN, MOUTAI, WLY) == expected_relation("CN", "贵州茅台", "五粮液")
    assert render_relation_prompt(CN, MOUTAI, WLY) == "请填空并返回完整的句子: 贵州茅台和五粮液最可能是___关系。"


def test_relation_prompt_same_stock():
    with pytest.raises(TemplateError):
        render_relation_prompt(EN, NVDA, NVDA)


def test_factor_prompt_en():
    news = "Nvidia shares gained in January."
    assert render_factor_prompt(EN, NVDA, 5, news) == (
        "Please extract the top 5 factors that may affect the stock price of Nvidia from the following news.\n" + news)


def test_factor_prompt_variant_three():
    news = "n"
    assert render_factor_prompt(EN.with_variant(2), NVDA, 5, news) == (
        "Please analyze the provided news and pinpoint the top 5 major factors impacting the stock price of Nvidia\nn")


@pytest.mark.parametrize("lang", ["EN", "CN"])
@pytest.mark.parametrize("variant", [0, 1, 2])
def test_factor_variants_match_golden(lang, variant):
    tpl = default_templates(lang, variant)
    target = NVDA if lang == "EN" else MOUTAI
    assert render_factor_prompt(tpl, target, 5, "news") == expected_factor(lang, target.company, 5, "news", variant)


@pytest.mark.parametrize("k, news", [(0, "x"), (5, ""), (5, "  \n")])
def test_factor_prompt_errors(k, news):
    with pytest.raises(TemplateError):
        render_factor_prompt(EN, NVDA, k, news)


def test_price_prompt_full_layer_apple_case():
    moves = window(dt.date(2019, 9, 10), ["rise", "rise", "fall", "rise", "rise"])
    moves = MovementWindow(
        (dt.date(2019, 9, 10), dt.date(2019, 9, 11), dt.date(2019, 9, 12), dt.date(2019, 9, 13), dt.date(2019, 9, 16)),
        moves.moves)
    got = render_price_prompt(EN, AAPL, ["Apple and Corning are most likely in a supplier relationship."],
                              ["$250 million investment in its supplier Corning Incorporated",
                               "positive initial demand for the iPhone 11"],
                              moves, dt.date(2019, 9, 17))
    lines = got.split("\n")
    assert len(lines) == 9
    assert lines[-2] == "On 2019-09-16, the stock price of AAPL rose."
    assert lines[-1] == "On 2019-09-17, the stock price of AAPL will ___."
    assert lines[1] == ("These are the main factors that may affect this stock's price recently: "
                        "$250 million investment in its supplier Corning Incorporated; "
                        "positive initial demand for the iPhone 11.")
    assert lines[2] == ("These are the connections between the companies that have appeared in the news: "
                        "Apple and Corning are most likely in a supplier relationship.")
    assert got == expected_price(
        "EN", "AAPL", ["2019-09-10", "2019-09-11", "2019-09-12", "2019-09-13", "2019-09-16"],
        ["rise", "rise", "fall", "rise", "rise"], "2019-09-17",
        factor="$250 million investment in its supplier Corning Incorporated; positive initial demand for the iPhone 11",
        relation="Apple and Corning are most likely in a supplier relationship")


def test_price_prompt_price_only():
    moves = window(dt.date(2019, 9, 10), ["rise"] * 5)
    got = render_price_prompt(EN, AAPL, [], [], moves, dt.date(2019, 9, 17))
    lines = got.split("\n")
    assert len(lines) == 7
    assert lines[0].startswith("Based on the following information")
    assert all(line.startswith("On ") for line in lines[1:])


def test_price_prompt_text_only_dataset():
    got = render_price_prompt(EN, AAPL, ["r"], ["f"], EMPTY_MOVEMENTS, dt.date(2020, 5, 11))
    assert got.split("\n") == [
        EN.price_preamble,
        "These are the main factors that may affect this stock's price recently: f.",
        "These are the connections between the companies that have appeared in the news: r.",
        "On 2020-05-11, the stock price of AAPL will ___.",
    ]


def test_price_prompt_cn():
    moves = window(dt.date(2021, 3, 1), ["fall", "rise", "rise", "fall", "fall"])
    got = render_price_prompt(CN, MOUTAI, [], ["白酒需求回暖"], moves, dt.date(2021, 3, 8))
    assert got == expected_price("CN", "贵州茅台", [d.isoformat() for d in moves.dates],
                                 ["fall", "rise", "rise", "fall", "fall"], "2021-03-08", factor="白酒需求回暖")
    assert got.endswith("在2021-03-08,贵州茅台的股价将___。")


def test_price_prompt_rejects_future_dates():
    moves = window(dt.date(2021, 3, 1), ["rise"] * 5)
    with pytest.raises(TemplateError):
        render_price_prompt(EN, AAPL, [], [], moves, dt.date(2021, 3, 3))


def test_randomized_renders_match_golden():
    rng = random.Random(11)
    for _ in range(20):
        lang = rng.choice(["EN", "CN"])
        tpl = default_templates(lang)
        target, peer = (rng.sample([NVDA, INTC, AAPL], 2) if lang == "EN" else [MOUTAI, WLY])
        start = dt.date(2015, 1, 1) + dt.timedelta(days=rng.randrange(2000))
        moves = [rng.choice(["rise", "fall"]) for _ in range(5)]
        mw = window(start, moves)
        td = start + dt.timedelta(days=5 + rng.randrange(3))
        assert render_relation_prompt(tpl, target, peer) == expected_relation(lang, target.company, peer.company)
        assert render_factor_prompt(tpl, target, 5, "N") == expected_factor(lang, target.company, 5, "N")
        assert render_price_prompt(tpl, target, [], [], mw, td) == expected_price(
            lang, target.company, [d.isoformat() for d in mw.dates], moves, td.isoformat())


def test_placeholder_checks():
    assert check_placeholders("{target} and {peer}") == {"target", "peer"}
    with pytest.raises(TemplateError):
        check_placeholders("{ticker}")
    with pytest.raises(TemplateError):
        check_placeholders("{target")
    with pytest.raises(TemplateError):
        default_templates("EN", variant=3)
    with pytest.raises(TemplateError):
        default_templates("FR")


def test_missing_binding_raises():
    tpl = PromptTemplateSet(**{**EN.__dict__, "relation_template": "{target} vs {news}"})
    with pytest.raises(TemplateError):
        render_relation_prompt(tpl, NVDA, INTC)


def test_load_templates_from_files(tmp_path):
    (tmp_path / "relation_template.txt").write_text("Relation of {target} to {peer}? ___\n", encoding="utf-8")
    (tmp_path / "factor_0.txt").write_text("Top {k} for {target}:\n{news}", encoding="utf-8")
    tpl = load_templates(tmp_path, "EN")
    assert render_relation_prompt(tpl, NVDA, INTC) == "Relation of Nvidia to Intel? ___"
    assert render_factor_prompt(tpl, NVDA, 3, "x") == "Top 3 for Nvidia:\nx"
    assert tpl.price_conclusion == EN.price_conclusion


def test_load_templates_defaults_equal_builtin(tmp_path):
    assert load_templates(tmp_path, "CN") == CN
