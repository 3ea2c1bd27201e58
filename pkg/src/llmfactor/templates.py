"""Prompt template sets for the three prompting stages (English and Chinese).

Placeholders use ``str.format`` syntax. Allowed names:
``target``, ``peer``, ``k``, ``date``, ``movement``, ``news``, ``factors``, ``relations``.
"""

from __future__ import annotations

import os
import string
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import TemplateError

PLACEHOLDERS = frozenset({"target", "peer", "k", "date", "movement", "news", "factors", "relations"})

SYSTEM_PREAMBLE = "You are a financial analysis assistant."

_FIELDS = (
    "relation_template",
    "time_template",
    "price_preamble",
    "factor_block",
    "relation_block",
    "price_conclusion",
)


@dataclass(frozen=True)
class PromptTemplateSet:
    language: str
    relation_template: str
    factor_templates: tuple[str, ...]
    time_template: str
    price_preamble: str
    factor_block: str
    relation_block: str
    price_conclusion: str
    list_separator: str = "; "
    variant: int = 0

    def __post_init__(self):
        if self.language not in ("EN", "CN"):
            raise TemplateError(f"unknown template language {self.language!r}")
        if not self.factor_templates:
            raise TemplateError("at least one factor template is required")
        if not 0 <= self.variant < len(self.factor_templates):
            raise TemplateError(f"factor template variant {self.variant} out of range 0..{len(self.factor_templates) - 1}")
        for name in _FIELDS:
            check_placeholders(getattr(self, name))
        for tpl in self.factor_templates:
            check_placeholders(tpl)

    @property
    def factor_template(self) -> str:
        return self.factor_templates[self.variant]

    def with_variant(self, variant: int) -> "PromptTemplateSet":
        return replace(self, variant=variant)


def check_placeholders(template: str) -> set[str]:
    names = set()
    try:
        parsed = list(string.Formatter().parse(template))
    except ValueError as e:
        raise TemplateError(f"malformed template {template!r}: {e}") from e
    for _, name, _, _ in parsed:
        if name is None:
            continue
        if name not in PLACEHOLDERS:
            raise TemplateError(f"unknown placeholder {{{name}}} in {template!r}")
        names.add(name)
    return names


def fill(template: str, **values) -> str:
    try:
        return template.format(**values)
    except (KeyError, IndexError) as e:
        raise TemplateError(f"no binding for placeholder {e} in {template!r}") from e


EN_TEMPLATES = PromptTemplateSet(
    language="EN",
    relation_template=(
        "Please fill in the blank and return a complete sentence: "
        "{target} and {peer} are most likely in a ___ relationship."
    ),
    factor_templates=(
        "Please extract the top {k} factors that may affect the stock price of {target} from the following news.\n{news}",
        "Please identify the primary top {k} factors influencing {target}'s stock price based on the news provided\n{news}",
        "Please analyze the provided news and pinpoint the top {k} major factors impacting the stock price of {target}\n{news}",
    ),
    time_template="On {date}, the stock price of {target} {movement}.",
    price_preamble=(
        "Based on the following information, please judge the direction of the stock price "
        "from rise/fall, fill in the blank and give reasons."
    ),
    factor_block="These are the main factors that may affect this stock's price recently: {factors}.",
    relation_block="These are the connections between the companies that have appeared in the news: {relations}.",
    price_conclusion="On {date}, the stock price of {target} will ___.",
)

CN_TEMPLATES = PromptTemplateSet(
    language="CN",
    relation_template="请填空并返回完整的句子: {target}和{peer}最可能是___关系。",
    factor_templates=(
        "请从以下新闻中提取可能影响{target}股价的前{k}个因素。\n{news}",
        "根据提供的新闻，请识别出影响{target}股价的主要{k}个因素\n{news}",
        "请分析所提供的新闻并找出影响{target}股价的前{k}个主要因素\n{news}",
    ),
    time_template="在{date},{target}的股价{movement}。",
    price_preamble="根据以下信息，请判断股票价格是上涨还是下跌，填写在空白处并给出理由。",
    factor_block="这些是最近可能影响该股票价格的主要因素: {factors}",
    relation_block="这些是新闻中出现过的公司之间的关系: {relations}",
    price_conclusion="在{date},{target}的股价将___。",
    list_separator="；",
)


def default_templates(language: str = "EN", variant: int = 0) -> PromptTemplateSet:
    base = {"EN": EN_TEMPLATES, "CN": CN_TEMPLATES}.get(language.upper())
    if base is None:
        raise TemplateError(f"no default templates for language {language!r}")
    return base.with_variant(variant)


def load_templates(directory: str | os.PathLike, language: str | None = None, variant: int = 0) -> PromptTemplateSet:
    """Load a template set from ``<field>.txt`` files plus ``factor_0.txt``, ``factor_1.txt`` ...

    Missing files fall back to the default set of ``language``. One trailing
    newline per file is dropped so editors that append one do not change prompts.
    """
    d = Path(directory)
    lang_file = d / "language.txt"
    if language is None:
        language = lang_file.read_text(encoding="utf-8").strip() if lang_file.exists() else "EN"
    base = default_templates(language)

    def read(name: str) -> str | None:
        p = d / f"{name}.txt"
        if not p.exists():
            return None
        text = p.read_text(encoding="utf-8")
        return text[:-1] if text.endswith("\n") else text

    values = {name: read(name) or getattr(base, name) for name in _FIELDS}
    factors = []
    i = 0
    while (d / f"factor_{i}.txt").exists():
        factors.append(read(f"factor_{i}"))
        i += 1
    sep = read("list_separator")
    return PromptTemplateSet(
        language=base.language,
        factor_templates=tuple(factors) or base.factor_templates,
        list_separator=sep if sep is not None else base.list_separator,
        variant=variant,
        **values,
    )
