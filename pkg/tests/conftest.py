"""Pytest configuration and shared fixtures."""

import dataclasses
import os
from collections.abc import Generator
from pathlib import Path

import numpy as np
import pytest
from typer.testing import CliRunner

from vomix.core.engine.weights import BlockWeights, WeightStore, init_weights
from vomix.core.models.tokens import TokenState
from vomix.core.models.vit import PRESETS, ViTConfig
from vomix.core.services.bench_service import synthetic_images
from vomix.core.services.selftest_service import TrialRandom, random_block


@pytest.fixture
def cli_runner() -> CliRunner:
    """Create a CLI runner for testing Typer commands."""
    return CliRunner()


@pytest.fixture
def temp_output_dir(tmp_path: Path) -> Generator[Path, None, None]:
    """Point VOMIX_OUTPUT_DIR at a temporary directory.

    Resets cached settings before and after so the override is picked up.
    """
    from vomix.config.settings import get_settings

    get_settings.cache_clear()

    out_dir = tmp_path / "vomix-out"
    old_value = os.environ.get("VOMIX_OUTPUT_DIR")
    os.environ["VOMIX_OUTPUT_DIR"] = str(out_dir)

    try:
        yield out_dir
    finally:
        if old_value is not None:
            os.environ["VOMIX_OUTPUT_DIR"] = old_value
        else:
            os.environ.pop("VOMIX_OUTPUT_DIR", None)
        get_settings.cache_clear()


@pytest.fixture
def tiny_config() -> ViTConfig:
    """Four-layer, 17-token model (16 patches plus the class token)."""
    return PRESETS["vit-tiny-32"]


@pytest.fixture
def tiny_weights(tiny_config: ViTConfig) -> WeightStore:
    """Seeded weights for the tiny model."""
    return init_weights(tiny_config, 7)


@pytest.fixture
def tiny_image(tiny_config: ViTConfig) -> np.ndarray:
    """A normalized synthetic input for the tiny model."""
    return synthetic_images(tiny_config, 1, 3)[0]


@pytest.fixture
def block_weights() -> BlockWeights:
    """Random block parameters for D=8 with well-spread projections."""
    return random_block(TrialRandom(11), 8)


@pytest.fixture
def two_cluster() -> tuple[TokenState, BlockWeights]:
    """Sixteen tokens in two groups of identical rows pointing in opposite directions.

    Even rows hold ``u``, odd rows ``-u``. With zero norm and qkv biases the
    keys of the two groups have cosine similarity -1, so votes never cross
    groups.
    """
    rnd = TrialRandom(5)
    d = 8
    u = rnd.array((d,), -1.0, 1.0)
    x = np.stack([u if i % 2 == 0 else -u for i in range(16)]).astype(np.float32)
    w = random_block(rnd, d)
    w = dataclasses.replace(
        w,
        norm1_b=np.zeros(d, dtype=np.float32),
        qkv_b=np.zeros(3 * d, dtype=np.float32),
    )
    return TokenState.fresh(x), w
