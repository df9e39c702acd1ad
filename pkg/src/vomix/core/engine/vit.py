"""ViT assembly: schedule expansion, patch embedding and the full forward pass."""

import logging
import math
from typing import Protocol

import numpy as np
from numpy.typing import NDArray

from vomix.core.engine.block import mlp_block, standard_attention_block, vomix_attention_block
from vomix.core.engine.strategies import validate
from vomix.core.engine.tensor import layer_norm, matmul, op_category
from vomix.core.engine.weights import WeightStore
from vomix.core.exceptions import ConfigurationError, ScheduleError
from vomix.core.models.strategy import StrategyConfig
from vomix.core.models.tokens import ForwardResult, LayerTrace, TokenState
from vomix.core.models.vit import PruneSchedule, ViTConfig

logger = logging.getLogger(__name__)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class TraceObserver(Protocol):
    """Anything that wants to see each layer's reduction as it happens."""

    def observe(self, trace: LayerTrace) -> None: ...


def _ratio(spec: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ScheduleError(spec, f"{text!r} is not a number") from None
    if not 0.0 <= value < 1.0:
        raise ScheduleError(spec, f"ratio {text} is outside [0, 1)")
    return value


def _layer_count(spec: str, text: str, depth: int) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ScheduleError(spec, f"{text!r} is not a layer count") from None
    if value < 0:
        raise ScheduleError(spec, f"layer count {value} is negative")
    if value > depth:
        raise ScheduleError(spec, f"layer count {value} exceeds model depth {depth}")
    return value


def expand_schedule(spec: str, depth: int) -> PruneSchedule:
    """Expand a schedule string into one ratio per layer.

    Grammar::

        const:<a>:<b>    a for the first b layers, then 0
        decr:<a>:<b>     a falling linearly to 0 at layer b-1, then 0
        list:<r0>,<r1>   explicit ratios, zero-padded to the model depth
        trunc:<a>        const:a over the first half of the layers

    Raises:
        ScheduleError: On malformed strings or out-of-range values.
    """
    if depth < 1:
        raise ScheduleError(spec, f"model depth {depth} must be at least 1")
    kind, _, rest = spec.strip().partition(":")
    kind = kind.lower()
    parts = rest.split(":") if rest else []
    ratios = [0.0] * depth

    if kind in ("const", "decr"):
        if len(parts) != 2:
            raise ScheduleError(spec, f"expected {kind}:<a>:<b>")
        a = _ratio(spec, parts[0])
        b = _layer_count(spec, parts[1], depth)
        for layer in range(b):
            if kind == "const" or b == 1:
                ratios[layer] = a
            else:
                ratios[layer] = a * (b - 1 - layer) / (b - 1)
    elif kind == "trunc":
        if len(parts) != 1:
            raise ScheduleError(spec, "expected trunc:<a>")
        a = _ratio(spec, parts[0])
        for layer in range(depth // 2):
            ratios[layer] = a
    elif kind == "list":
        if len(parts) != 1 or not parts[0]:
            raise ScheduleError(spec, "expected list:<r0>,<r1>,...")
        values = [_ratio(spec, item.strip()) for item in parts[0].split(",")]
        if len(values) > depth:
            raise ScheduleError(spec, f"{len(values)} ratios for a {depth}-layer model")
        ratios[: len(values)] = values
    else:
        raise ScheduleError(spec, f"unknown schedule kind {kind!r}")

    return PruneSchedule(spec=spec, ratios=tuple(ratios))


def preprocess_image(
    image: NDArray[np.uint8],
    mean: tuple[float, ...] = IMAGENET_MEAN,
    std: tuple[float, ...] = IMAGENET_STD,
) -> NDArray[np.float32]:
    """Scale 8-bit H x W x C pixels to [0, 1] and normalize per channel."""
    if image.ndim != 3:
        raise ConfigurationError(f"image must be H x W x C, got shape {image.shape}")
    channels = image.shape[2]
    if len(mean) != channels or len(std) != channels:
        raise ConfigurationError(
            f"normalization has {len(mean)} means / {len(std)} stds for {channels} channels"
        )
    if any(s <= 0 for s in std):
        raise ConfigurationError("normalization std must be positive")
    scaled = image.astype(np.float32) / np.float32(255.0)
    return ((scaled - np.asarray(mean, np.float32)) / np.asarray(std, np.float32)).astype(
        np.float32
    )


def patch_embed(image: NDArray[np.float32], w: WeightStore, cfg: ViTConfig) -> TokenState:
    """Split into non-overlapping patches, project, add class and position embeddings."""
    expected = (cfg.image_size, cfg.image_size, cfg.channels)
    if tuple(image.shape) != expected:
        raise ConfigurationError(f"image shape {tuple(image.shape)} does not match {expected}")

    g, p, c = cfg.grid_size, cfg.patch_size, cfg.channels
    patches = (
        np.asarray(image, dtype=np.float32)
        .reshape(g, p, g, p, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(g * g, p * p * c)
    )
    with op_category("patch_embed"):
        tokens = matmul(patches, w["patch_embed.weight"]) + w["patch_embed.bias"]
    if cfg.class_token:
        tokens = np.concatenate([w["cls_token"], tokens], axis=0)
    tokens = tokens + w["pos_embed"]
    return TokenState.fresh(tokens.astype(np.float32))


def classify(state: TokenState, w: WeightStore, cfg: ViTConfig) -> NDArray[np.float32]:
    """Final norm and head, on the class token or a size-weighted token mean."""
    h = layer_norm(state.x, w["norm.weight"], w["norm.bias"])
    assert state.origin is not None
    cls_rows = np.flatnonzero(state.origin == 0) if cfg.class_token else np.zeros(0)
    if cls_rows.size:
        pooled = h[int(cls_rows[0])]
    else:
        if cfg.class_token:
            logger.warning("class token was pruned, pooling over remaining tokens")
        weights = state.sizes / state.sizes.sum()
        pooled = (weights @ h.astype(np.float64)).astype(np.float32)
    with op_category("head"):
        logits = matmul(pooled[None, :], w["head.weight"])[0] + w["head.bias"]
    return logits.astype(np.float32)


def forward(
    inputs: NDArray[np.floating] | TokenState,
    w: WeightStore,
    cfg: ViTConfig,
    sched: PruneSchedule,
    strategy: StrategyConfig | None = None,
    protected: tuple[int, ...] | None = None,
    enabled: bool | None = None,
    tracker: TraceObserver | None = None,
) -> ForwardResult:
    """Run the full model.

    ``inputs`` is a normalized H x W x C image or a ready token state. With
    ``enabled`` False every layer is the vanilla attention block; by default
    the reduction path runs whenever the schedule prunes anything.

    Raises:
        ConfigurationError: If the schedule does not cover the model depth.
    """
    if sched.depth != cfg.depth:
        raise ConfigurationError(
            f"schedule has {sched.depth} ratios for a {cfg.depth}-layer model"
        )
    strategy = validate(strategy)
    protected = cfg.default_protected() if protected is None else tuple(protected)
    enabled = (not sched.is_zero) if enabled is None else enabled

    if isinstance(inputs, TokenState):
        state = TokenState(x=inputs.x, sizes=inputs.sizes, layer=0, origin=inputs.origin)
    else:
        state = patch_embed(inputs, w, cfg)
    n0 = state.total_size
    traces: list[LayerTrace] = []

    for layer, ratio in enumerate(sched.ratios):
        block = w.block(layer)
        if enabled:
            state, trace = vomix_attention_block(
                state, block, ratio, strategy, cfg.heads, protected
            )
        else:
            state, trace = standard_attention_block(state, block, cfg.heads)
        state = mlp_block(state, block)
        traces.append(trace)
        if tracker is not None:
            tracker.observe(trace)

    conserving = all(t.conserves_mass for t in traces)
    if conserving and not math.isclose(state.total_size, n0, rel_tol=1e-4):
        logger.warning(f"token mass drifted from {n0} to {state.total_size}")

    result = ForwardResult(logits=classify(state, w, cfg), traces=traces, state=state)
    logger.debug(f"forward {cfg.name} [{sched.spec}]: trajectory {result.trajectory}")
    return result
