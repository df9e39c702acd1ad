"""Tests for voting, selection, query mixing and proportional attention."""

import numpy as np
import pytest

from vomix.core.engine.attention import (
    compute_key_similarity,
    mix_queries,
    mixture_weights,
    pairwise_similarity,
    proportional_attention,
    pruned_count,
    select_tokens,
    vote_scores,
)
from vomix.core.exceptions import ConfigurationError, InvariantViolationError
from vomix.core.models.strategy import AttnMix, Fanout, QueryMix
from vomix.core.models.tokens import AttentionProjections, Partition, SimilarityMatrix


def three_token_sim() -> SimilarityMatrix:
    values = np.array(
        [[-np.inf, 0.9, 0.1], [0.9, -np.inf, 0.2], [0.1, 0.2, -np.inf]], dtype=np.float32
    )
    return SimilarityMatrix(values=values)


def projections(q: np.ndarray) -> AttentionProjections:
    """Single-head projections with the given queries and zero keys/values."""
    q = np.asarray(q, dtype=np.float32)[None]
    return AttentionProjections(q=q, k=np.zeros_like(q), v=np.zeros_like(q))


class TestPrunedCount:
    """Test cases for the floor rule."""

    def test_class_token_protected(self):
        """Test 196 unprotected tokens at 5% prune 9."""
        assert pruned_count(197, 0.05, 1) == 9

    def test_binary_fraction_guard(self):
        """Test 100 * 0.29 floors to 29, not 28."""
        assert pruned_count(100, 0.29) == 29

    def test_small_counts(self):
        """Test a few small cases."""
        assert pruned_count(8, 0.25) == 2
        assert pruned_count(3, 0.0) == 0
        assert pruned_count(1, 0.5, 1) == 0


class TestSimilarity:
    """Test cases for pairwise similarity."""

    def test_cosine_diagonal_masked(self):
        """Test the diagonal is -inf and identical rows score 1."""
        feat = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
        a = pairwise_similarity(feat, "cosine")
        assert np.all(np.isneginf(np.diag(a)))
        assert a[0, 1] == pytest.approx(1.0)
        assert a[0, 2] == pytest.approx(0.0)

    def test_l2_is_negative_distance(self):
        """Test l2 similarity is minus the Euclidean distance."""
        a = pairwise_similarity(np.array([[0.0, 0.0], [3.0, 4.0]]), "l2")
        assert a[0, 1] == pytest.approx(-5.0)
        assert a[1, 0] == pytest.approx(-5.0)

    def test_dot(self):
        """Test dot-product similarity."""
        a = pairwise_similarity(np.array([[1.0, 2.0], [3.0, 4.0]]), "dot")
        assert a[0, 1] == pytest.approx(11.0)

    def test_zero_vector_cosine(self):
        """Test zero-norm features give similarity 0 instead of NaN."""
        a = pairwise_similarity(np.array([[0.0, 0.0], [1.0, 0.0]]), "cosine")
        assert a[0, 1] == 0.0

    def test_needs_two_tokens(self):
        """Test a single token has nothing to compare with."""
        with pytest.raises(ConfigurationError):
            compute_key_similarity(projections(np.ones((1, 2))))


class TestVoteScores:
    """Test cases for weighted voting."""

    def test_top1(self):
        """Test the hand-traced three-token example."""
        votes = vote_scores(three_token_sim())
        assert votes.z.tolist() == [1, 0, 1]
        assert votes.score.tolist() == pytest.approx([0.9, 1.1, 0.0], abs=1e-6)

    def test_top2_votes_for_everyone(self):
        """Test two votes per token on three tokens."""
        votes = vote_scores(three_token_sim(), Fanout.top2)
        assert votes.score.tolist() == pytest.approx([1.0, 1.1, 0.3], abs=1e-6)
        assert votes.targets is not None
        assert votes.targets.shape == (3, 2)

    def test_topr_with_one_vote(self):
        """Test topr degenerates to top1 when floor(N*r) is 1."""
        votes = vote_scores(three_token_sim(), Fanout.topr, ratio=0.4)
        assert votes.score.tolist() == pytest.approx([0.9, 1.1, 0.0], abs=1e-6)


class TestSelectTokens:
    """Test cases for select_tokens."""

    def test_highest_score_pruned(self):
        """Test the most-voted token is pruned."""
        part = select_tokens(np.array([0.9, 1.1, 0.0]), 0.4)
        assert part.pruned.tolist() == [1]
        assert part.retained.tolist() == [0, 2]

    def test_protected_never_pruned(self):
        """Test protection moves pruning to the next candidate."""
        part = select_tokens(np.array([0.9, 1.1, 0.0]), 0.5, (1,))
        assert part.pruned.tolist() == [0]

    def test_ties_prune_lower_index(self):
        """Test equal scores prune the lowest indices."""
        part = select_tokens(np.zeros(5), 0.4)
        assert part.pruned.tolist() == [0, 1]

    def test_zero_ratio(self):
        """Test nothing is pruned at r=0."""
        part = select_tokens(np.array([1.0, 2.0]), 0.0)
        assert part.num_pruned == 0
        assert part.retained.tolist() == [0, 1]

    def test_ratio_out_of_range(self):
        """Test r=1 is rejected."""
        with pytest.raises(ConfigurationError):
            select_tokens(np.zeros(4), 1.0)

    def test_too_many_protected(self):
        """Test protection cannot exceed the retained slots."""
        with pytest.raises(ConfigurationError):
            select_tokens(np.zeros(4), 0.5, (0, 1, 2))


class TestQueryMixing:
    """Test cases for mixture weights and query mixing."""

    def test_mixture_weights(self):
        """Test the pruned token's weights over the retained ones."""
        part = Partition(pruned=np.array([1]), retained=np.array([0, 2]))
        weights = mixture_weights(three_token_sim(), part)
        assert weights.w.dtype == np.float64
        assert weights.w[0].tolist() == pytest.approx([0.6682, 0.3318], abs=1e-4)

    def test_empty_partition(self):
        """Test no pruned tokens gives an empty weight block."""
        part = Partition(pruned=np.zeros(0, dtype=np.int64), retained=np.arange(3))
        assert mixture_weights(three_token_sim(), part).is_empty

    def test_global_mix_sizes(self):
        """Test sizes grow by the mixture weights and the total is conserved."""
        part = Partition(pruned=np.array([1]), retained=np.array([0, 2]))
        weights = mixture_weights(three_token_sim(), part)
        proj = projections([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        mixed = mix_queries(proj, np.ones(3), part, weights, QueryMix.global_)
        assert mixed.sizes.tolist() == pytest.approx([1.6682, 1.3318], abs=1e-4)
        assert mixed.sizes.sum() == pytest.approx(3.0, abs=1e-12)
        assert mixed.conserves_mass
        w0 = weights.w[0, 0]
        expected = np.array([1.0, w0]) / (1.0 + w0)
        np.testing.assert_allclose(mixed.q[0], expected, atol=1e-6)

    def test_max_mix_is_one_hot(self):
        """Test max mode sends the pruned token wholly to one target."""
        part = Partition(pruned=np.array([1]), retained=np.array([0, 2]))
        weights = mixture_weights(three_token_sim(), part)
        proj = projections([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        mixed = mix_queries(proj, np.ones(3), part, weights, QueryMix.max)
        assert mixed.sizes.tolist() == [2.0, 1.0]
        np.testing.assert_allclose(mixed.q[0], [0.5, 0.5], atol=1e-6)

    def test_none_mix_drops_mass(self):
        """Test none mode keeps retained queries and loses pruned mass."""
        part = Partition(pruned=np.array([1]), retained=np.array([0, 2]))
        weights = mixture_weights(three_token_sim(), part)
        proj = projections([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        mixed = mix_queries(proj, np.ones(3), part, weights, QueryMix.none)
        assert mixed.sizes.tolist() == [1.0, 1.0]
        assert not mixed.conserves_mass
        np.testing.assert_array_equal(mixed.q, [[1.0, 0.0], [1.0, 1.0]])


class TestProportionalAttention:
    """Test cases for proportional attention."""

    def setup_method(self):
        """One zero query against two keys with unit-vector values."""
        self.q = np.zeros((1, 2), dtype=np.float32)
        v = np.array([[[1.0, 0.0], [0.0, 1.0]]], dtype=np.float32)
        self.proj = AttentionProjections(q=np.zeros_like(v), k=np.zeros_like(v), v=v)

    def test_size_bias(self):
        """Test sizes (1, 3) weight equal logits as (1/4, 3/4)."""
        out = proportional_attention(self.q, self.proj, np.array([1.0, 3.0]), AttnMix.prop)
        np.testing.assert_allclose(out[0], [0.25, 0.75], atol=1e-6)

    def test_no_prop(self):
        """Test the bias is dropped without proportional attention."""
        out = proportional_attention(self.q, self.proj, np.array([1.0, 3.0]), AttnMix.no_prop)
        np.testing.assert_allclose(out[0], [0.5, 0.5], atol=1e-6)

    def test_none_uses_retained_keys_only(self):
        """Test attention restricted to the retained tokens."""
        out = proportional_attention(
            self.q, self.proj, np.array([1.0, 3.0]), AttnMix.none, retained=np.array([0])
        )
        np.testing.assert_allclose(out[0], [1.0, 0.0], atol=1e-6)

    def test_non_positive_size(self):
        """Test sizes must be positive."""
        with pytest.raises(InvariantViolationError):
            proportional_attention(self.q, self.proj, np.array([1.0, 0.0]))

    def test_output_projection(self):
        """Test projection weights and bias are applied."""
        out = proportional_attention(
            self.q,
            self.proj,
            np.array([1.0, 1.0]),
            proj_weight=np.eye(2, dtype=np.float32) * 2,
            proj_bias=np.ones(2, dtype=np.float32),
        )
        np.testing.assert_allclose(out[0], [2.0, 2.0], atol=1e-6)
