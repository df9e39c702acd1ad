"""Selection scorers and strategy validation.

Every selection strategy produces one score per token; higher means "more
homogeneous, prune first". The reduction pipeline is the same for all of
them, only the scorer is swapped.
"""

import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import ValidationError

from vomix.core.engine.attention import vote_scores
from vomix.core.engine.rng import SplitMix64
from vomix.core.engine.tensor import record_ops
from vomix.core.exceptions import ConfigurationError
from vomix.core.models.strategy import STRATEGY_AXES, Fanout, Selection, StrategyConfig
from vomix.core.models.tokens import SimilarityMatrix

logger = logging.getLogger(__name__)

ScoreFn = Callable[[SimilarityMatrix, StrategyConfig, float, int], NDArray[np.float64]]


@dataclass
class ScorerInfo:
    """Metadata about a registered scorer."""

    selection: Selection
    description: str
    score: ScoreFn


class ScorerRegistry:
    """Registry of selection scorers keyed by :class:`Selection`.

    Usage:
        @ScorerRegistry.register(Selection.vote, "weighted similarity voting")
        def _vote(sim, strategy, ratio, layer):
            ...

        scores = ScorerRegistry.score(sim, strategy, ratio, layer)
    """

    _scorers: dict[Selection, ScorerInfo] = {}

    @classmethod
    def register(cls, selection: Selection, description: str) -> Callable[[ScoreFn], ScoreFn]:
        def decorator(fn: ScoreFn) -> ScoreFn:
            cls._scorers[selection] = ScorerInfo(selection, description, fn)
            return fn

        return decorator

    @classmethod
    def get(cls, selection: Selection | str) -> ScorerInfo:
        """Look up a scorer.

        Raises:
            ConfigurationError: If nothing is registered for ``selection``.
        """
        try:
            return cls._scorers[Selection(selection)]
        except (KeyError, ValueError):
            raise ConfigurationError(f"Unknown selection strategy: {selection!r}") from None

    @classmethod
    def score(
        cls,
        sim: SimilarityMatrix,
        strategy: StrategyConfig,
        ratio: float,
        layer: int,
    ) -> NDArray[np.float64]:
        return cls.get(strategy.selection).score(sim, strategy, ratio, layer)

    @classmethod
    def available(cls) -> list[str]:
        return [s.value for s in cls._scorers]


def max_sim_scores(sim: SimilarityMatrix) -> NDArray[np.float64]:
    """Mean similarity of each token to every other token."""
    a = sim.values.astype(np.float64)
    n = a.shape[0]
    record_ops(n * n, "vote")
    if n < 2:
        return np.zeros(n, dtype=np.float64)
    np.fill_diagonal(a, 0.0)
    return a.sum(axis=1) / (n - 1)


def random_scores(n: int, seed: int) -> NDArray[np.float64]:
    """Reproducible pseudo-random scores in [0, 1)."""
    return SplitMix64(seed).uniform(n)


@ScorerRegistry.register(Selection.vote, "weighted similarity voting (reference)")
def _vote(
    sim: SimilarityMatrix, strategy: StrategyConfig, ratio: float, layer: int
) -> NDArray[np.float64]:
    return vote_scores(sim, strategy.fanout, ratio).score


@ScorerRegistry.register(Selection.max_sim, "highest mean similarity")
def _max_sim(
    sim: SimilarityMatrix, strategy: StrategyConfig, ratio: float, layer: int
) -> NDArray[np.float64]:
    return max_sim_scores(sim)


@ScorerRegistry.register(Selection.random, "uniform random selection")
def _random(
    sim: SimilarityMatrix, strategy: StrategyConfig, ratio: float, layer: int
) -> NDArray[np.float64]:
    # one stream per layer so layers do not all pick the same positions
    return random_scores(sim.num_tokens, strategy.random_seed + layer)


def strategy_warnings(cfg: StrategyConfig) -> list[str]:
    """Combinations that are accepted but have no effect."""
    warnings = []
    if cfg.selection is not Selection.vote and cfg.fanout is not Fanout.top1:
        warnings.append(
            f"fanout={cfg.fanout.value} is ignored when selection={cfg.selection.value}"
        )
    return warnings


def validate(cfg: StrategyConfig | Mapping[str, Any] | None = None) -> StrategyConfig:
    """Build a checked strategy, filling defaults.

    Raises:
        ConfigurationError: On unknown keys or enum values.
    """
    if cfg is None:
        checked = StrategyConfig()
    elif isinstance(cfg, StrategyConfig):
        checked = cfg
    else:
        values = {k: v for k, v in cfg.items() if v is not None}
        unknown = sorted(set(values) - set(STRATEGY_AXES) - {"random_seed"})
        if unknown:
            raise ConfigurationError(f"Unknown strategy keys: {', '.join(unknown)}")
        try:
            checked = StrategyConfig(**values)
        except ValidationError as e:
            first = e.errors()[0]
            field = ".".join(str(p) for p in first["loc"])
            raise ConfigurationError(
                f"Invalid strategy value for {field}: {first.get('input')!r}"
            ) from None

    for message in strategy_warnings(checked):
        logger.warning(message)
    return checked
