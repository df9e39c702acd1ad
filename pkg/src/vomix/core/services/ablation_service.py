"""Strategy ablation grids.

A grid spec lists values per strategy axis::

    selection=vote,max_sim,random;metric=cosine,l2

Axes left out keep their default value. Every combination runs one forward
pass on the same seeded weights and input, and is summarized by a checksum of
the final token matrix and its multiply-accumulate count.
"""

import csv
import hashlib
import itertools
import logging
from enum import Enum
from pathlib import Path

import numpy as np

from vomix.core.engine.strategies import validate
from vomix.core.engine.tensor import OpCounter, counting
from vomix.core.engine.vit import forward
from vomix.core.engine.weights import WeightStore, init_weights
from vomix.core.exceptions import ConfigurationError
from vomix.core.models.reports import AblationRow
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
from vomix.core.models.tokens import TokenState
from vomix.core.models.vit import PruneSchedule, ViTConfig
from vomix.core.services.bench_service import OVERHEAD_CATEGORIES, synthetic_images

logger = logging.getLogger(__name__)

AXIS_ENUMS: dict[str, type[Enum]] = {
    "selection": Selection,
    "fanout": Fanout,
    "feature": Feature,
    "metric": Metric,
    "query_mix": QueryMix,
    "attn_mix": AttnMix,
}

ABLATION_COLUMNS: tuple[str, ...] = tuple(AblationRow.model_fields)


def parse_grid(spec: str) -> dict[str, tuple[str, ...]]:
    """Parse ``axis=v1,v2;axis=v1`` into axis -> values.

    Axis names accept dashes (``query-mix``). Repeated values collapse.

    Raises:
        ConfigurationError: On unknown axes or values, repeated axes or empty lists.
    """
    grid: dict[str, tuple[str, ...]] = {}
    for clause in spec.split(";"):
        clause = clause.strip()
        if not clause:
            continue
        axis, sep, raw_values = clause.partition("=")
        axis = axis.strip().replace("-", "_")
        if not sep:
            raise ConfigurationError(f"Grid clause {clause!r} is not of the form axis=values")
        if axis not in AXIS_ENUMS:
            raise ConfigurationError(
                f"Unknown grid axis {axis!r}. Available: {', '.join(STRATEGY_AXES)}"
            )
        if axis in grid:
            raise ConfigurationError(f"Grid axis {axis!r} given twice")

        values = tuple(dict.fromkeys(v.strip() for v in raw_values.split(",") if v.strip()))
        if not values:
            raise ConfigurationError(f"Grid axis {axis!r} has no values")
        allowed = [member.value for member in AXIS_ENUMS[axis]]
        for value in values:
            if value not in allowed:
                raise ConfigurationError(
                    f"Unknown {axis} value {value!r}. Available: {', '.join(allowed)}"
                )
        grid[axis] = values
    return grid


def expand_grid(grid: dict[str, tuple[str, ...]]) -> list[StrategyConfig]:
    """Cartesian product over the axes; the default combination always appears once."""
    default = StrategyConfig()
    choices = [grid.get(axis, (getattr(default, axis).value,)) for axis in STRATEGY_AXES]
    combos = [
        validate(dict(zip(STRATEGY_AXES, values, strict=True)))
        for values in itertools.product(*choices)
    ]
    if default.label() not in {c.label() for c in combos}:
        combos.insert(0, default)
    return combos


def state_checksum(state: TokenState) -> str:
    data = np.ascontiguousarray(state.x, dtype="<f4").tobytes()
    return hashlib.sha256(data).hexdigest()[:16]


def run_ablation(
    cfg: ViTConfig,
    sched: PruneSchedule,
    grid: dict[str, tuple[str, ...]],
    seed: int = 0,
    out: Path | None = None,
    weights: WeightStore | None = None,
    protected: tuple[int, ...] | None = None,
) -> list[AblationRow]:
    """Run every combination of ``grid`` on one seeded input."""
    weights = weights if weights is not None else init_weights(cfg, seed)
    image = synthetic_images(cfg, 1, seed + 1)[0]

    rows = []
    for strategy in expand_grid(grid):
        with counting(OpCounter()) as counter:
            result = forward(image, weights, cfg, sched, strategy, protected)
        assert result.state is not None
        rows.append(
            AblationRow(
                combo=strategy.label(),
                is_default=strategy.is_default,
                checksum=state_checksum(result.state),
                op_count=counter.total(),
                overhead_ops=counter.total(OVERHEAD_CATEGORIES),
                tokens_out=result.state.num_tokens,
            )
        )
        logger.debug(f"ablation {strategy.label()}: {rows[-1].checksum}")

    if out is not None:
        write_ablation_csv(rows, out)
    return rows


def write_ablation_csv(rows: list[AblationRow], path: Path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=ABLATION_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.model_dump())
    logger.info(f"Wrote {len(rows)} ablation rows to {path}")
