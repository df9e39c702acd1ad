"""Provenance tracking and visualization.

An assignment matrix M (N0 x N_l) records, for every surviving token, the
convex weights of the original tokens it is made of. Each reducing layer
folds the pruned columns into the retained ones with the same size-weighted
rule the engine applies to queries, so columns stay stochastic and every
original token's size-weighted mass stays 1.

Rendering
---------
Heatmaps min-max normalize one column over the patch tokens and map
t in [0, 1] through a black-red-yellow-white ramp::

    r = clip(3t), g = clip(3t - 1), b = clip(3t - 2)

Region maps color every patch by its dominant destination token. Destination
k gets hue ``frac(k * 0.618033988749895)`` at saturation 0.65, value 0.95.
"""

import colorsys
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from vomix.core.engine.image_io import write_ppm
from vomix.core.engine.tensor import argmax_rows
from vomix.core.exceptions import ConfigurationError, InvariantViolationError
from vomix.core.models.tokens import LayerTrace
from vomix.core.models.vit import ViTConfig

logger = logging.getLogger(__name__)

COLUMN_TOLERANCE = 1e-4
GOLDEN_FRACTION = 0.618033988749895
PALETTE_SATURATION = 0.65
PALETTE_VALUE = 0.95


@dataclass
class AssignmentMatrix:
    """Column-stochastic N0 x N_l provenance weights (float64)."""

    m: NDArray[np.float64]

    @property
    def n0(self) -> int:
        return int(self.m.shape[0])

    @property
    def num_tokens(self) -> int:
        return int(self.m.shape[1])

    def column_sums(self) -> NDArray[np.float64]:
        return self.m.sum(axis=0)


def init_assignment(n0: int) -> AssignmentMatrix:
    if n0 < 1:
        raise ConfigurationError(f"assignment needs at least one token, got {n0}")
    return AssignmentMatrix(m=np.eye(n0, dtype=np.float64))


def update_assignment(am: AssignmentMatrix, trace: LayerTrace) -> AssignmentMatrix:
    """Fold one layer's mixing into the provenance matrix.

    Raises:
        ConfigurationError: If the trace does not match the matrix width.
        InvariantViolationError: If any column sum drifts from 1.
    """
    if am.num_tokens != trace.n_in:
        raise ConfigurationError(
            f"trace for {trace.n_in} tokens applied to a {am.num_tokens}-column assignment"
        )
    if trace.pruned.size == 0:
        return AssignmentMatrix(m=am.m[:, trace.retained].copy())

    s = trace.sizes_before
    pr, ret = trace.pruned, trace.retained
    weighted_ret = am.m[:, ret] * s[ret]
    weighted_pr = am.m[:, pr] * s[pr]
    merged = (weighted_ret + weighted_pr @ trace.weights) / trace.sizes_after

    drift = np.abs(merged.sum(axis=0) - 1.0).max(initial=0.0)
    if drift > COLUMN_TOLERANCE:
        raise InvariantViolationError(
            f"layer {trace.layer}: assignment column sums drifted by {drift:.2e}"
        )
    return AssignmentMatrix(m=merged)


class ProvenanceTracker:
    """Collects traces from one forward pass and keeps M current."""

    def __init__(self, n0: int) -> None:
        self.assignment = init_assignment(n0)
        self.sizes = np.ones(n0, dtype=np.float64)
        self.traces: list[LayerTrace] = []

    def observe(self, trace: LayerTrace) -> None:
        self.assignment = update_assignment(self.assignment, trace)
        self.sizes = trace.sizes_after.copy()
        self.traces.append(trace)
        logger.debug(f"provenance after layer {trace.layer}: {self.assignment.num_tokens} columns")

    def token_mass(self) -> NDArray[np.float64]:
        """Size-weighted mass of every original token (1 while mass is conserved)."""
        return self.assignment.m @ self.sizes


@dataclass(frozen=True)
class TokenLayout:
    """Where original tokens sit spatially. Metadata only; the engine ignores it.

    Patch tokens are ordered frame-major, then row-major within a frame. A class
    token, if present, comes first and has no grid position.
    """

    grid_h: int
    grid_w: int
    frames: int = 1
    class_token: bool = False

    @classmethod
    def for_model(cls, cfg: ViTConfig, frames: int = 1) -> "TokenLayout":
        return cls(
            grid_h=cfg.grid_size, grid_w=cfg.grid_size, frames=frames, class_token=cfg.class_token
        )

    @property
    def offset(self) -> int:
        return 1 if self.class_token else 0

    @property
    def num_patches(self) -> int:
        return self.frames * self.grid_h * self.grid_w

    def check(self, am: AssignmentMatrix) -> None:
        if am.n0 != self.num_patches + self.offset:
            raise ConfigurationError(
                f"layout holds {self.num_patches + self.offset} tokens, assignment has {am.n0}"
            )

    def to_image(self, values: NDArray) -> NDArray:
        """Patch values -> grid_h x (frames * grid_w) [x C], frames side by side."""
        tail = values.shape[1:]
        grid = values.reshape(self.frames, self.grid_h, self.grid_w, *tail)
        return np.concatenate(list(grid), axis=1)


def hot_ramp(t: NDArray[np.float64]) -> NDArray[np.uint8]:
    rgb = np.stack([3 * t, 3 * t - 1, 3 * t - 2], axis=-1)
    return np.round(np.clip(rgb, 0.0, 1.0) * 255).astype(np.uint8)


def palette_color(index: int) -> tuple[int, int, int]:
    hue = (index * GOLDEN_FRACTION) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, PALETTE_SATURATION, PALETTE_VALUE)
    return round(r * 255), round(g * 255), round(b * 255)


def _upscale(image: NDArray[np.uint8], scale: int) -> NDArray[np.uint8]:
    if scale < 1:
        raise ConfigurationError(f"scale must be a positive integer, got {scale}")
    return np.repeat(np.repeat(image, scale, axis=0), scale, axis=1)


def render_heatmap(
    am: AssignmentMatrix,
    token_index: int,
    layout: TokenLayout,
    out: Path | None = None,
    scale: int = 1,
) -> NDArray[np.uint8]:
    """Where current token ``token_index`` draws its content from.

    Raises:
        ConfigurationError: If the token index or layout does not fit ``am``.
    """
    layout.check(am)
    if not 0 <= token_index < am.num_tokens:
        raise ConfigurationError(
            f"token index {token_index} out of range for {am.num_tokens} tokens"
        )
    column = am.m[layout.offset :, token_index]
    low, high = column.min(), column.max()
    t = (column - low) / (high - low) if high > low else np.zeros_like(column)
    image = _upscale(layout.to_image(hot_ramp(t)), scale)
    if out is not None:
        write_ppm(image, out)
    return image


def region_labels(am: AssignmentMatrix, layout: TokenLayout) -> NDArray[np.int64]:
    """Dominant destination token of every patch, laid out on the grid."""
    layout.check(am)
    return layout.to_image(argmax_rows(am.m[layout.offset :]))


def render_region_map(
    am: AssignmentMatrix,
    layout: TokenLayout,
    out: Path | None = None,
    scale: int = 1,
) -> NDArray[np.uint8]:
    """Color every patch by the surviving token that holds most of it."""
    labels = region_labels(am, layout)
    colors = np.array([palette_color(k) for k in range(am.num_tokens)], dtype=np.uint8)
    image = _upscale(colors[labels], scale)
    if out is not None:
        write_ppm(image, out)
    return image
