"""Configuration schemas, value objects and reports."""

from vomix.core.models.reports import (
    MAC_CONVENTION,
    AblationRow,
    BenchResult,
    FlopsReport,
    LayerFlops,
    SuiteResult,
)
from vomix.core.models.strategy import (
    STRATEGY_AXES,
    AttnMix,
    Fanout,
    Feature,
    Metric,
    QueryMix,
    Selection,
    StrategyConfig,
)
from vomix.core.models.tokens import (
    AttentionProjections,
    ForwardResult,
    LayerTrace,
    MixtureWeights,
    Partition,
    SimilarityMatrix,
    TokenState,
    VoteResult,
)
from vomix.core.models.vit import PRESETS, PruneSchedule, ViTConfig

__all__ = [
    # Model shape
    "PRESETS",
    "PruneSchedule",
    "ViTConfig",
    # Strategy
    "STRATEGY_AXES",
    "AttnMix",
    "Fanout",
    "Feature",
    "Metric",
    "QueryMix",
    "Selection",
    "StrategyConfig",
    # Tokens
    "AttentionProjections",
    "ForwardResult",
    "LayerTrace",
    "MixtureWeights",
    "Partition",
    "SimilarityMatrix",
    "TokenState",
    "VoteResult",
    # Reports
    "MAC_CONVENTION",
    "AblationRow",
    "BenchResult",
    "FlopsReport",
    "LayerFlops",
    "SuiteResult",
]
