"""Inputs and outputs around a single forward pass."""

import logging
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from vomix.core.engine.image_io import check_image_size, read_ppm
from vomix.core.engine.vit import IMAGENET_MEAN, IMAGENET_STD, preprocess_image
from vomix.core.engine.weights import WeightStore, init_weights, load_weights
from vomix.core.exceptions import ImageFormatError
from vomix.core.models.tokens import LayerTrace
from vomix.core.models.vit import ViTConfig
from vomix.core.services.bench_service import synthetic_images

logger = logging.getLogger(__name__)


def load_image(
    path: Path | None,
    cfg: ViTConfig,
    seed: int = 0,
    mean: tuple[float, ...] | None = None,
    std: tuple[float, ...] | None = None,
) -> NDArray[np.float32]:
    """Normalized model input from a PPM file, or a seeded synthetic image.

    Raises:
        FileNotFoundError: If ``path`` does not exist.
        ImageFormatError: If the file is not an RGB PPM of the model's size.
    """
    if path is None:
        return synthetic_images(cfg, 1, seed + 1)[0]
    if cfg.channels != 3:
        raise ImageFormatError(f"PPM input is RGB but the model expects {cfg.channels} channels")
    image = read_ppm(path)
    check_image_size(image, cfg.image_size, str(path))
    return preprocess_image(image, mean or IMAGENET_MEAN, std or IMAGENET_STD)


def resolve_weights(cfg: ViTConfig, path: Path | None = None, seed: int = 0) -> WeightStore:
    """Load and validate a weight file, or initialize from ``seed``."""
    if path is None:
        return init_weights(cfg, seed)
    return load_weights(path, cfg)


def write_logits(logits: NDArray[np.float32], path: Path) -> None:
    """One logit per line, shortest round-trip float32 text."""
    path = Path(path)
    lines = [np.format_float_positional(np.float32(v), unique=True, trim="-") for v in logits]
    path.write_text("\n".join(lines) + "\n")
    logger.info(f"Wrote {len(lines)} logits to {path}")


def format_trace(trace: LayerTrace) -> str:
    """``layer 0: 197 -> 188 retained 0 1 2 ...`` with original token indices."""
    retained = " ".join(str(i) for i in trace.origin_retained.tolist())
    return f"layer {trace.layer}: {trace.n_in} -> {trace.n_out} retained {retained}"


def write_traces(traces: list[LayerTrace], path: Path) -> None:
    path = Path(path)
    path.write_text("".join(format_trace(t) + "\n" for t in traces))
    logger.info(f"Wrote {len(traces)} layer traces to {path}")
