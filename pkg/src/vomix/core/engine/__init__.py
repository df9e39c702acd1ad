"""Numerical engine: kernels, reducing attention, the ViT forward pass and weights."""

from vomix.core.engine.attention import (
    compute_key_similarity,
    mix_queries,
    mixture_weights,
    proportional_attention,
    pruned_count,
    select_tokens,
    vote_scores,
)
from vomix.core.engine.block import mlp_block, standard_attention_block, vomix_attention_block
from vomix.core.engine.strategies import ScorerRegistry, max_sim_scores, random_scores, validate
from vomix.core.engine.tensor import OpCounter, counting
from vomix.core.engine.vit import expand_schedule, forward, patch_embed, preprocess_image
from vomix.core.engine.weights import WeightStore, init_weights, load_weights, save_weights

__all__ = [
    "OpCounter",
    "ScorerRegistry",
    "WeightStore",
    "compute_key_similarity",
    "counting",
    "expand_schedule",
    "forward",
    "init_weights",
    "load_weights",
    "max_sim_scores",
    "mix_queries",
    "mixture_weights",
    "mlp_block",
    "patch_embed",
    "preprocess_image",
    "proportional_attention",
    "pruned_count",
    "random_scores",
    "save_weights",
    "select_tokens",
    "standard_attention_block",
    "validate",
    "vomix_attention_block",
    "vote_scores",
]
