"""Token-reduction strategy configuration (the ablation axes)."""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field


class Selection(str, Enum):
    """How pruning candidates are scored."""

    vote = "vote"
    max_sim = "max_sim"
    random = "random"


class Fanout(str, Enum):
    """How many tokens each token votes for."""

    top1 = "top1"
    top2 = "top2"
    topr = "topr"


class Feature(str, Enum):
    """Projection used as the similarity feature."""

    q = "q"
    k = "k"
    v = "v"


class Metric(str, Enum):
    """Pairwise similarity metric."""

    cosine = "cosine"
    l2 = "l2"
    dot = "dot"


class QueryMix(str, Enum):
    """How pruned queries are folded into retained ones."""

    global_ = "global"
    max = "max"
    none = "none"


class AttnMix(str, Enum):
    """Attention variant run with the mixed queries."""

    prop = "prop"
    no_prop = "no_prop"
    none = "none"


STRATEGY_AXES: tuple[str, ...] = (
    "selection",
    "fanout",
    "feature",
    "metric",
    "query_mix",
    "attn_mix",
)


class StrategyConfig(BaseModel):
    """One point of the ablation grid. Defaults are the reference method."""

    model_config = ConfigDict(frozen=True)

    selection: Selection = Selection.vote
    fanout: Fanout = Fanout.top1
    feature: Feature = Feature.k
    metric: Metric = Metric.cosine
    query_mix: QueryMix = QueryMix.global_
    attn_mix: AttnMix = AttnMix.prop
    random_seed: int = Field(default=0, ge=0, description="Seed for random selection")

    @property
    def is_default(self) -> bool:
        return self.label() == StrategyConfig().label()

    def label(self) -> str:
        """Compact identifier, e.g. ``vote/top1/k/cosine/global/prop``."""
        return "/".join(getattr(self, axis).value for axis in STRATEGY_AXES)
