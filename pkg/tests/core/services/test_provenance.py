"""Tests for provenance tracking and rendering."""

from pathlib import Path

import numpy as np
import pytest

from vomix.core.engine.block import mlp_block, vomix_attention_block
from vomix.core.engine.image_io import read_ppm
from vomix.core.engine.vit import expand_schedule, forward
from vomix.core.engine.weights import BlockWeights, WeightStore
from vomix.core.exceptions import ConfigurationError
from vomix.core.models.strategy import StrategyConfig
from vomix.core.models.tokens import TokenState
from vomix.core.models.vit import ViTConfig
from vomix.core.services.provenance_service import (
    AssignmentMatrix,
    ProvenanceTracker,
    TokenLayout,
    init_assignment,
    palette_color,
    region_labels,
    render_heatmap,
    render_region_map,
    update_assignment,
)
from vomix.core.services.selftest_service import TrialRandom


class TestUpdateAssignment:
    """Test cases for folding layers into the assignment matrix."""

    def test_two_clusters(self, two_cluster: tuple[TokenState, BlockWeights]):
        """Test opposite groups collapse into one surviving token each."""
        state, w = two_cluster
        _, trace = vomix_attention_block(state, w, 0.875, StrategyConfig(), 2)
        assert trace.retained.tolist() == [14, 15]
        np.testing.assert_allclose(trace.sizes_after, [8.0, 8.0], atol=1e-6)
        np.testing.assert_allclose(trace.weights[0], [0.8808, 0.1192], atol=1e-4)

        tracker = ProvenanceTracker(16)
        tracker.observe(trace)
        np.testing.assert_allclose(tracker.assignment.column_sums(), 1.0, atol=1e-9)
        np.testing.assert_allclose(tracker.token_mass(), 1.0, atol=1e-9)

        layout = TokenLayout(grid_h=4, grid_w=4)
        labels = region_labels(tracker.assignment, layout)
        assert labels.ravel().tolist() == [0, 1] * 8

    def test_mass_conserved_over_layers(self, block_weights: BlockWeights):
        """Test every original token keeps mass 1 through const:0.25:2 from four tokens."""
        state = TokenState.fresh(TrialRandom(8).array((4, 8), -1.0, 1.0))
        tracker = ProvenanceTracker(4)
        for _ in range(2):
            state, trace = vomix_attention_block(state, block_weights, 0.25, StrategyConfig(), 2)
            state = mlp_block(state, block_weights)
            tracker.observe(trace)
        assert tracker.assignment.num_tokens == 3
        np.testing.assert_allclose(tracker.token_mass(), 1.0, atol=1e-4)

    def test_width_mismatch(self, two_cluster: tuple[TokenState, BlockWeights]):
        """Test a trace must match the current column count."""
        state, w = two_cluster
        _, trace = vomix_attention_block(state, w, 0.5, StrategyConfig(), 2)
        with pytest.raises(ConfigurationError):
            update_assignment(init_assignment(15), trace)

    def test_forward_tracker(
        self, tiny_config: ViTConfig, tiny_weights: WeightStore, tiny_image: np.ndarray
    ):
        """Test a tracker fed by the forward pass ends with one column per token."""
        tracker = ProvenanceTracker(tiny_config.num_tokens)
        sched = expand_schedule("const:0.25:4", tiny_config.depth)
        forward(tiny_image, tiny_weights, tiny_config, sched, tracker=tracker)
        assert tracker.assignment.m.shape == (17, 7)
        np.testing.assert_allclose(tracker.token_mass(), 1.0, atol=1e-4)


class TestTokenLayout:
    """Test cases for TokenLayout."""

    def test_for_model(self, tiny_config: ViTConfig):
        """Test the tiny model's grid."""
        layout = TokenLayout.for_model(tiny_config)
        assert (layout.grid_h, layout.grid_w, layout.offset) == (4, 4, 1)
        assert layout.num_patches == 16

    def test_frames_side_by_side(self):
        """Test frames are laid out left to right."""
        layout = TokenLayout(grid_h=1, grid_w=2, frames=2)
        assert layout.to_image(np.arange(4)).tolist() == [[0, 1, 2, 3]]

    def test_check(self):
        """Test the layout must cover every original token."""
        with pytest.raises(ConfigurationError):
            TokenLayout(grid_h=2, grid_w=2, class_token=True).check(init_assignment(4))


class TestRendering:
    """Test cases for heatmaps and region maps."""

    def test_heatmap_identity(self):
        """Test a token that only holds itself lights one patch."""
        image = render_heatmap(init_assignment(4), 0, TokenLayout(grid_h=2, grid_w=2), scale=2)
        assert image.shape == (4, 4, 3)
        assert image[0, 0].tolist() == [255, 255, 255]
        assert image[1, 1].tolist() == [255, 255, 255]
        assert image[3, 3].tolist() == [0, 0, 0]

    def test_heatmap_constant_column(self):
        """Test a uniform column renders black instead of dividing by zero."""
        am = AssignmentMatrix(m=np.full((4, 1), 0.25))
        image = render_heatmap(am, 0, TokenLayout(grid_h=2, grid_w=2))
        assert not image.any()

    def test_heatmap_bad_index(self):
        """Test out-of-range token indices are rejected."""
        with pytest.raises(ConfigurationError):
            render_heatmap(init_assignment(4), 4, TokenLayout(grid_h=2, grid_w=2))

    def test_palette(self):
        """Test the first palette color."""
        assert palette_color(0) == (242, 85, 85)
        assert palette_color(1) != palette_color(2)

    def test_region_map_identity(self):
        """Test each patch gets its own color when nothing was merged."""
        image = render_region_map(init_assignment(4), TokenLayout(grid_h=2, grid_w=2))
        assert image[0, 0].tolist() == list(palette_color(0))
        assert image[1, 1].tolist() == list(palette_color(3))

    def test_files_identical(self, tmp_path: Path):
        """Test rendering twice writes identical bytes."""
        am = AssignmentMatrix(m=np.array([[0.7, 0.0], [0.3, 0.2], [0.0, 0.8], [0.0, 0.0]]))
        layout = TokenLayout(grid_h=2, grid_w=2)
        first, second = tmp_path / "a.ppm", tmp_path / "b.ppm"
        render_region_map(am, layout, first)
        render_region_map(am, layout, second)
        assert first.read_bytes() == second.read_bytes()
        assert read_ppm(first).shape == (2, 2, 3)
