"""Tests for the SplitMix64 generator."""

import numpy as np

from vomix.core.engine.oracle import splitmix_uniform
from vomix.core.engine.rng import GOLDEN, SplitMix64


class TestSplitMix64:
    """Test cases for SplitMix64."""

    def test_first_output_seed_zero(self):
        """Test the well-known first output for seed 0."""
        assert int(SplitMix64(0).next_u64(1)[0]) == 0xE220A8397B1DCDAF

    def test_block_size_independent(self):
        """Test one large draw equals several small ones."""
        whole = SplitMix64(5).next_u64(10)
        rng = SplitMix64(5)
        parts = np.concatenate([rng.next_u64(3), rng.next_u64(7)])
        np.testing.assert_array_equal(whole, parts)

    def test_state_advances(self):
        """Test the state moves by one increment per output."""
        rng = SplitMix64(0)
        rng.next_u64(2)
        assert rng.state == (2 * int(GOLDEN)) % (1 << 64)

    def test_uniform_range(self):
        """Test uniform values are in [0, 1)."""
        values = SplitMix64(3).uniform(10_000)
        assert values.min() >= 0.0
        assert values.max() < 1.0

    def test_matches_scalar_implementation(self):
        """Test the vectorized generator against a plain-integer one."""
        vectorized = SplitMix64(123).uniform(50)
        np.testing.assert_array_equal(vectorized, np.array(splitmix_uniform(123, 50)))

    def test_init_values(self):
        """Test weight-init values stay within +-0.02."""
        values = SplitMix64(9).init_values((64, 32))
        assert values.shape == (64, 32)
        assert values.dtype == np.float32
        assert float(np.abs(values).max()) <= 0.02

    def test_seeds_differ(self):
        """Test different seeds give different streams."""
        assert not np.array_equal(SplitMix64(0).uniform(8), SplitMix64(1).uniform(8))
