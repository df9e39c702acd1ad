"""Tests for schedule expansion and the full forward pass."""

import numpy as np
import pytest

from vomix.core.engine.vit import expand_schedule, forward, patch_embed, preprocess_image
from vomix.core.engine.weights import WeightStore, init_weights
from vomix.core.exceptions import ConfigurationError, ScheduleError
from vomix.core.models.strategy import QueryMix, StrategyConfig
from vomix.core.models.vit import PRESETS, ViTConfig


class TestExpandSchedule:
    """Test cases for expand_schedule."""

    def test_const(self):
        """Test const pads with zeros after b layers."""
        assert expand_schedule("const:0.1:3", 5).ratios == (0.1, 0.1, 0.1, 0.0, 0.0)

    def test_decr(self):
        """Test decr falls linearly to zero at layer b-1."""
        ratios = expand_schedule("decr:0.3:4", 5).ratios
        assert ratios == pytest.approx((0.3, 0.2, 0.1, 0.0, 0.0))

    def test_decr_single_layer(self):
        """Test decr over one layer keeps the starting ratio."""
        assert expand_schedule("decr:0.2:1", 3).ratios == (0.2, 0.0, 0.0)

    def test_trunc(self):
        """Test trunc covers the first half of the model."""
        assert expand_schedule("trunc:0.05", 5).ratios == (0.05, 0.05, 0.0, 0.0, 0.0)

    def test_list_zero_padded(self):
        """Test explicit lists are padded to the depth."""
        assert expand_schedule("list:0.1,0.2", 4).ratios == (0.1, 0.2, 0.0, 0.0)

    def test_zero_schedule(self):
        """Test const with zero ratio is recognized as vanilla."""
        assert expand_schedule("const:0:12", 12).is_zero

    @pytest.mark.parametrize(
        "spec",
        [
            "const:0.1",
            "const:1.0:2",
            "const:-0.1:2",
            "const:abc:2",
            "const:0.1:13",
            "decr:0.1:x",
            "list:",
            "list:0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1",
            "ramp:0.1:2",
        ],
    )
    def test_malformed(self, spec: str):
        """Test malformed or out-of-range schedules are rejected."""
        with pytest.raises(ScheduleError) as exc_info:
            expand_schedule(spec, 12)
        assert spec in exc_info.value.message


class TestPreprocess:
    """Test cases for preprocess_image."""

    def test_normalization(self):
        """Test a mid-grey pixel with unit std and zero mean."""
        image = np.full((2, 2, 3), 255, dtype=np.uint8)
        out = preprocess_image(image, mean=(0.0, 0.0, 0.0), std=(0.5, 0.5, 0.5))
        assert out.dtype == np.float32
        np.testing.assert_allclose(out, 2.0)

    def test_channel_mismatch(self):
        """Test normalization must match the channel count."""
        with pytest.raises(ConfigurationError):
            preprocess_image(np.zeros((2, 2, 3), dtype=np.uint8), mean=(0.0,), std=(1.0,))


class TestPatchEmbed:
    """Test cases for patch_embed."""

    def test_token_count(
        self, tiny_config: ViTConfig, tiny_weights: WeightStore, tiny_image: np.ndarray
    ):
        """Test 16 patches plus the class token."""
        state = patch_embed(tiny_image, tiny_weights, tiny_config)
        assert state.num_tokens == 17
        assert state.dim == 64
        assert state.total_size == 17.0

    def test_high_resolution_count(self):
        """Test 518 pixels at patch 14 give 37 x 37 patches plus the class token."""
        cfg = ViTConfig(
            name="h14-518-narrow",
            image_size=518,
            patch_size=14,
            channels=3,
            depth=1,
            embed_dim=8,
            heads=2,
            classes=2,
        )
        image = np.zeros((518, 518, 3), dtype=np.float32)
        state = patch_embed(image, init_weights(cfg, 0), cfg)
        assert state.num_tokens == 1370
        assert PRESETS["vit-h14-518"].num_tokens == 1370

    def test_wrong_shape(self, tiny_config: ViTConfig, tiny_weights: WeightStore):
        """Test the image must match the model input size."""
        with pytest.raises(ConfigurationError):
            patch_embed(np.zeros((16, 16, 3), dtype=np.float32), tiny_weights, tiny_config)


class TestForward:
    """Test cases for forward."""

    def test_tiny_trajectory(
        self, tiny_config: ViTConfig, tiny_weights: WeightStore, tiny_image: np.ndarray
    ):
        """Test token counts under const:0.25:4 with the class token protected."""
        sched = expand_schedule("const:0.25:4", tiny_config.depth)
        result = forward(tiny_image, tiny_weights, tiny_config, sched)
        assert result.trajectory == [17, 13, 10, 8, 7]
        assert result.logits.shape == (tiny_config.classes,)
        assert result.state is not None
        assert result.state.total_size == pytest.approx(17.0, rel=1e-6)
        assert 0 in result.state.origin.tolist()

    def test_deterministic(
        self, tiny_config: ViTConfig, tiny_weights: WeightStore, tiny_image: np.ndarray
    ):
        """Test repeated runs give bit-identical logits."""
        sched = expand_schedule("const:0.25:4", tiny_config.depth)
        first = forward(tiny_image, tiny_weights, tiny_config, sched)
        second = forward(tiny_image, tiny_weights, tiny_config, sched)
        assert first.logits.tobytes() == second.logits.tobytes()

    def test_zero_schedule_matches_vanilla(
        self, tiny_config: ViTConfig, tiny_weights: WeightStore, tiny_image: np.ndarray
    ):
        """Test the reduction path at r=0 agrees with the plain model."""
        sched = expand_schedule("const:0:4", tiny_config.depth)
        vanilla = forward(tiny_image, tiny_weights, tiny_config, sched, enabled=False)
        reduced = forward(tiny_image, tiny_weights, tiny_config, sched, enabled=True)
        np.testing.assert_allclose(reduced.logits, vanilla.logits, atol=1e-5)
        assert vanilla.trajectory == [17] * 5

    def test_none_mix_loses_mass(
        self, tiny_config: ViTConfig, tiny_weights: WeightStore, tiny_image: np.ndarray
    ):
        """Test final mass equals the final token count without query mixing."""
        sched = expand_schedule("const:0.25:4", tiny_config.depth)
        result = forward(
            tiny_image,
            tiny_weights,
            tiny_config,
            sched,
            strategy=StrategyConfig(query_mix=QueryMix.none),
        )
        assert result.state is not None
        assert result.state.total_size == pytest.approx(7.0)

    def test_depth_mismatch(
        self, tiny_config: ViTConfig, tiny_weights: WeightStore, tiny_image: np.ndarray
    ):
        """Test the schedule must cover every layer."""
        sched = expand_schedule("const:0.1:2", 3)
        with pytest.raises(ConfigurationError):
            forward(tiny_image, tiny_weights, tiny_config, sched)

    def test_tracker_sees_every_layer(
        self, tiny_config: ViTConfig, tiny_weights: WeightStore, tiny_image: np.ndarray
    ):
        """Test the observer is called once per layer in order."""
        seen: list[int] = []

        class Recorder:
            def observe(self, trace) -> None:
                seen.append(trace.layer)

        sched = expand_schedule("const:0.25:4", tiny_config.depth)
        forward(tiny_image, tiny_weights, tiny_config, sched, tracker=Recorder())
        assert seen == [0, 1, 2, 3]

    @pytest.mark.slow
    def test_vit_small_trajectory(self):
        """Test the 197-token model at 5% per layer."""
        cfg = PRESETS["vit-s16-224"]
        w = init_weights(cfg, 0)
        image = np.zeros((224, 224, 3), dtype=np.float32)
        result = forward(image, w, cfg, expand_schedule("const:0.05:3", cfg.depth))
        assert result.trajectory[:4] == [197, 188, 179, 171]
