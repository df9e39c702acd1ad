"""Tests for forward-pass inputs and outputs."""

from pathlib import Path

import numpy as np
import pytest

from vomix.core.engine.image_io import write_ppm
from vomix.core.engine.vit import expand_schedule, forward
from vomix.core.engine.weights import WeightStore, save_weights
from vomix.core.exceptions import ImageFormatError, IncompleteWeightsError
from vomix.core.models.vit import PRESETS, ViTConfig
from vomix.core.services.inference_service import (
    format_trace,
    load_image,
    resolve_weights,
    write_logits,
    write_traces,
)


class TestLoadImage:
    """Test cases for load_image."""

    def test_synthetic_when_no_path(self, tiny_config: ViTConfig):
        """Test a seeded image is generated without a file."""
        a = load_image(None, tiny_config, seed=2)
        b = load_image(None, tiny_config, seed=2)
        assert a.shape == (32, 32, 3)
        np.testing.assert_array_equal(a, b)

    def test_ppm(self, tmp_path: Path, tiny_config: ViTConfig):
        """Test a PPM is normalized with the given statistics."""
        path = tmp_path / "in.ppm"
        write_ppm(np.full((32, 32, 3), 255, dtype=np.uint8), path)
        image = load_image(path, tiny_config, mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0))
        np.testing.assert_allclose(image, 1.0)

    def test_wrong_size(self, tmp_path: Path, tiny_config: ViTConfig):
        """Test images must match the model input size."""
        path = tmp_path / "small.ppm"
        write_ppm(np.zeros((16, 16, 3), dtype=np.uint8), path)
        with pytest.raises(ImageFormatError):
            load_image(path, tiny_config)

    def test_missing_file(self, tmp_path: Path, tiny_config: ViTConfig):
        """Test a missing path raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "absent.ppm", tiny_config)


class TestResolveWeights:
    """Test cases for resolve_weights."""

    def test_seeded(self, tiny_config: ViTConfig, tiny_weights: WeightStore):
        """Test no path initializes from the seed."""
        assert resolve_weights(tiny_config, seed=7).equals(tiny_weights)

    def test_file_validated(self, tmp_path: Path, tiny_weights: WeightStore):
        """Test a file for another model is rejected."""
        path = tmp_path / "tiny.vmtw"
        save_weights(tiny_weights, path)
        other = PRESETS["vit-tiny-32"].model_copy(update={"depth": 5})
        with pytest.raises(IncompleteWeightsError):
            resolve_weights(other, path)


class TestOutputs:
    """Test cases for logits and trace files."""

    def test_logits_text(self, tmp_path: Path):
        """Test one shortest round-trip value per line."""
        path = tmp_path / "logits.txt"
        write_logits(np.array([0.5, -2.0, 0.1], dtype=np.float32), path)
        assert path.read_text() == "0.5\n-2\n0.1\n"

    def test_logits_reload_exactly(self, tmp_path: Path):
        """Test written logits parse back to identical float32 values."""
        values = np.array([1 / 3, -7.123456e-5, 1e8], dtype=np.float32)
        path = tmp_path / "logits.txt"
        write_logits(values, path)
        parsed = np.array(path.read_text().split(), dtype=np.float32)
        assert parsed.tobytes() == values.tobytes()

    def test_traces(
        self,
        tmp_path: Path,
        tiny_config: ViTConfig,
        tiny_weights: WeightStore,
        tiny_image: np.ndarray,
    ):
        """Test one line per layer with original token indices."""
        sched = expand_schedule("const:0.25:4", tiny_config.depth)
        result = forward(tiny_image, tiny_weights, tiny_config, sched)
        line = format_trace(result.traces[0])
        assert line.startswith("layer 0: 17 -> 13 retained 0 ")
        assert len(line.split("retained ")[1].split()) == 13

        path = tmp_path / "trace.txt"
        write_traces(result.traces, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 4
        assert lines[-1].startswith("layer 3: 8 -> 7")
