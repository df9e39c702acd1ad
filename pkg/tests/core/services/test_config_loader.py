"""Tests for config loader."""

import os
from pathlib import Path

import pytest

from vomix.core.exceptions import ConfigLoadError, ConfigurationError
from vomix.core.models.strategy import Metric, QueryMix
from vomix.core.services.config_loader import (
    load_config,
    load_keyvalue_config,
    load_yaml_config,
    resolve_model_config,
    resolve_strategy,
    substitute_env_vars,
)


class TestSubstituteEnvVars:
    """Test cases for environment variable substitution."""

    def test_substitute_simple_var(self):
        """Test substituting a simple variable."""
        os.environ["VOMIX_TEST_RATIO"] = "0.1"
        try:
            assert substitute_env_vars("const:${VOMIX_TEST_RATIO}:12") == "const:0.1:12"
        finally:
            del os.environ["VOMIX_TEST_RATIO"]

    def test_substitute_with_default(self):
        """Test substituting with default value."""
        assert substitute_env_vars("${NONEXISTENT_VAR:-0.05}") == "0.05"

    def test_substitute_missing_var_raises(self):
        """Test that missing required var raises error."""
        with pytest.raises(ConfigLoadError) as exc_info:
            substitute_env_vars("${DEFINITELY_NOT_SET}")
        assert "DEFINITELY_NOT_SET" in str(exc_info.value)

    def test_substitute_nested(self):
        """Test substitution in nested dicts and lists."""
        result = substitute_env_vars({"a": ["${NOPE_X:-1}", 2], "b": {"c": "${NOPE_Y:-k}"}})
        assert result == {"a": ["1", 2], "b": {"c": "k"}}


class TestLoadYamlConfig:
    """Test cases for YAML loading."""

    def test_load_valid_yaml(self, tmp_path: Path):
        """Test loading valid YAML file."""
        config_file = tmp_path / "run.yaml"
        config_file.write_text("preset: vit-b16-224\nschedule: const:0.05:12\n")
        config = load_yaml_config(config_file)
        assert config == {"preset": "vit-b16-224", "schedule": "const:0.05:12"}

    def test_load_nonexistent_file(self, tmp_path: Path):
        """Test loading non-existent file raises error."""
        with pytest.raises(ConfigLoadError) as exc_info:
            load_yaml_config(tmp_path / "nonexistent.yaml")
        assert "not found" in str(exc_info.value)

    def test_load_invalid_yaml(self, tmp_path: Path):
        """Test loading invalid YAML raises error."""
        config_file = tmp_path / "bad.yaml"
        config_file.write_text("{ invalid yaml [")
        with pytest.raises(ConfigLoadError) as exc_info:
            load_yaml_config(config_file)
        assert "Invalid YAML" in str(exc_info.value)

    def test_load_empty_yaml(self, tmp_path: Path):
        """Test loading empty YAML raises error."""
        config_file = tmp_path / "empty.yaml"
        config_file.write_text("")
        with pytest.raises(ConfigLoadError) as exc_info:
            load_yaml_config(config_file)
        assert "Empty" in str(exc_info.value)


class TestLoadKeyValueConfig:
    """Test cases for key = value files."""

    def test_comments_and_blanks(self, tmp_path: Path):
        """Test comments and blank lines are skipped."""
        config_file = tmp_path / "run.cfg"
        config_file.write_text("# run\n\npreset = vit-tiny-32  # small\nseed=3\n")
        assert load_keyvalue_config(config_file) == {"preset": "vit-tiny-32", "seed": "3"}

    def test_malformed_line(self, tmp_path: Path):
        """Test a line without '=' names its line number."""
        config_file = tmp_path / "run.cfg"
        config_file.write_text("preset = vit-tiny-32\nschedule\n")
        with pytest.raises(ConfigLoadError) as exc_info:
            load_keyvalue_config(config_file)
        assert ":2:" in str(exc_info.value)


class TestLoadConfig:
    """Test cases for load_config."""

    def test_keyvalue_lists(self, tmp_path: Path):
        """Test comma lists and typed values."""
        config_file = tmp_path / "run.cfg"
        config_file.write_text(
            "preset = vit-tiny-32\n"
            "schedule = const:${NOT_SET_RATIO:-0.25}:4\n"
            "protect = 0\n"
            "mean = 0.5, 0.5, 0.5\n"
            "metric = l2\n"
            "seed = 9\n"
        )
        config = load_config(config_file)
        assert config.schedule == "const:0.25:4"
        assert config.protect == (0,)
        assert config.mean == (0.5, 0.5, 0.5)
        assert config.seed == 9
        assert config.strategy_values() == {"metric": "l2"}

    def test_yaml_model_overrides(self, tmp_path: Path):
        """Test shape keys are collected as overrides."""
        config_file = tmp_path / "run.yml"
        config_file.write_text("preset: vit-tiny-32\ndepth: 2\nclasses: 5\n")
        assert load_config(config_file).model_overrides() == {"depth": 2, "classes": 5}

    def test_unknown_key(self, tmp_path: Path):
        """Test unknown keys are rejected."""
        config_file = tmp_path / "run.cfg"
        config_file.write_text("preset = vit-tiny-32\nlearning_rate = 0.1\n")
        with pytest.raises(ConfigLoadError) as exc_info:
            load_config(config_file)
        assert "learning_rate" in str(exc_info.value)

    def test_bad_value(self, tmp_path: Path):
        """Test values of the wrong type are rejected."""
        config_file = tmp_path / "run.cfg"
        config_file.write_text("depth = deep\n")
        with pytest.raises(ConfigLoadError) as exc_info:
            load_config(config_file)
        assert "depth" in str(exc_info.value)


class TestResolveModelConfig:
    """Test cases for resolve_model_config."""

    def test_preset(self):
        """Test a baked preset resolves unchanged."""
        cfg = resolve_model_config("vit-b16-224")
        assert cfg.num_tokens == 197
        assert cfg.depth == 12

    def test_override(self):
        """Test overrides replace preset fields."""
        cfg = resolve_model_config("vit-tiny-32", {"depth": 2, "heads": None})
        assert cfg.depth == 2
        assert cfg.heads == 4

    def test_unknown_preset(self):
        """Test unknown presets list the available ones."""
        with pytest.raises(ConfigurationError) as exc_info:
            resolve_model_config("vit-z99")
        assert "vit-b16-224" in str(exc_info.value)

    def test_inconsistent_shape(self):
        """Test a patch size that does not divide the image is rejected."""
        with pytest.raises(ConfigurationError):
            resolve_model_config("vit-tiny-32", {"patch_size": 5})

    def test_custom_needs_all_fields(self):
        """Test a model without a preset must be complete."""
        with pytest.raises(ConfigurationError):
            resolve_model_config(None, {"depth": 2})


class TestResolveStrategy:
    """Test cases for resolve_strategy."""

    def test_later_layers_win(self):
        """Test command-line values override file values."""
        cfg = resolve_strategy({"metric": "l2", "query_mix": "max"}, {"metric": "dot"})
        assert cfg.metric is Metric.dot
        assert cfg.query_mix is QueryMix.max

    def test_none_values_skipped(self):
        """Test unset options do not clobber earlier layers."""
        cfg = resolve_strategy({"metric": "l2"}, {"metric": None})
        assert cfg.metric is Metric.l2
