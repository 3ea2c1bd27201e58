"""Factor-guided LLM prompting for binary stock movement prediction."""

from .core import (
    ConfusionMatrix,
    Direction,
    EvalReport,
    MovementWindow,
    PriceWindow,
    StockEntry,
    accuracy,
    evaluate,
    label_movements,
    mcc,
)
from .ingest import DatasetManifest, DatasetRecord, NewsItem, load_dataset, load_stock_registry, make_windows
from .matcher import MatchResult, StockMatcher, match_stocks
from .skgp import FactorSet, Layer, PredictionRecord, PromptBundle, RelationFinding, run_skgp
from .templates import PromptTemplateSet, default_templates

__version__ = "0.1.0"
