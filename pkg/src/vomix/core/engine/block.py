"""Pre-norm transformer blocks: reducing attention, vanilla attention and MLP."""

import logging
import math

import numpy as np
from numpy.typing import NDArray

from vomix.core.engine.attention import (
    compute_key_similarity,
    mix_queries,
    mixture_weights,
    proportional_attention,
    select_tokens,
)
from vomix.core.engine.strategies import ScorerRegistry
from vomix.core.engine.tensor import gelu, layer_norm, matmul, op_category, row_softmax
from vomix.core.engine.weights import BlockWeights
from vomix.core.models.strategy import StrategyConfig
from vomix.core.models.tokens import (
    AttentionProjections,
    LayerTrace,
    Partition,
    TokenState,
)

logger = logging.getLogger(__name__)


def qkv_matrix(x: NDArray[np.float32], w: BlockWeights) -> NDArray[np.float32]:
    """Pre-norm and project tokens: N x D -> N x 3D, columns q | k | v."""
    h = layer_norm(x, w.norm1_w, w.norm1_b)
    with op_category("qkv"):
        return matmul(h, w.qkv_w) + w.qkv_b


def qkv_projections(x: NDArray[np.float32], w: BlockWeights, heads: int) -> AttentionProjections:
    """Per-head q, k, v of the block input."""
    qkv = qkv_matrix(x, w)
    d = x.shape[1]
    return AttentionProjections(
        q=AttentionProjections.split_heads(qkv[:, :d], heads),
        k=AttentionProjections.split_heads(qkv[:, d : 2 * d], heads),
        v=AttentionProjections.split_heads(qkv[:, 2 * d :], heads),
    )


def _passthrough(n: int) -> Partition:
    return Partition(pruned=np.zeros(0, dtype=np.int64), retained=np.arange(n, dtype=np.int64))


def vomix_attention_block(
    state: TokenState,
    w: BlockWeights,
    ratio: float,
    strategy: StrategyConfig,
    heads: int,
    protected: tuple[int, ...] = (),
) -> tuple[TokenState, LayerTrace]:
    """Attention sub-block with vote-and-mix token reduction.

    ``protected`` holds original token indices that may never be pruned; they
    are tracked through earlier reductions via ``state.origin``.
    """
    x = state.x
    n = state.num_tokens
    proj = qkv_projections(x, w, heads)

    if n < 2:
        # nothing to vote on
        part = _passthrough(n)
        mixed_q = AttentionProjections.merge_heads(proj.q)
        sizes_after = state.sizes.copy()
        weights = np.zeros((0, n), dtype=np.float64)
        conserves = True
    else:
        with op_category("similarity"):
            sim = compute_key_similarity(proj, strategy.feature, strategy.metric)
        scores = ScorerRegistry.score(sim, strategy, ratio, state.layer)
        part = select_tokens(scores, ratio, state.protected_rows(protected))
        mix_w = mixture_weights(sim, part)
        with op_category("mix"):
            mixed = mix_queries(proj, state.sizes, part, mix_w, strategy.query_mix)
        mixed_q, sizes_after = mixed.q, mixed.sizes
        weights, conserves = mixed.weights, mixed.conserves_mass

    attn_out = proportional_attention(
        mixed_q,
        proj,
        state.sizes,
        strategy.attn_mix,
        retained=part.retained,
        proj_weight=w.proj_w,
        proj_bias=w.proj_b,
    )
    x_new = (x[part.retained] + attn_out).astype(np.float32)
    assert state.origin is not None
    origin = state.origin[part.retained]

    trace = LayerTrace(
        layer=state.layer,
        n_in=n,
        n_out=part.num_retained,
        ratio=ratio,
        pruned=part.pruned,
        retained=part.retained,
        weights=weights,
        sizes_before=state.sizes.copy(),
        sizes_after=sizes_after,
        origin_retained=origin,
        conserves_mass=conserves,
    )
    logger.debug(f"layer {state.layer}: {n} -> {part.num_retained} tokens (r={ratio})")
    return TokenState(x=x_new, sizes=sizes_after, layer=state.layer, origin=origin), trace


def standard_attention_block(
    state: TokenState, w: BlockWeights, heads: int
) -> tuple[TokenState, LayerTrace]:
    """Plain multi-head self-attention sub-block, no reduction."""
    x = state.x
    n = state.num_tokens
    proj = qkv_projections(x, w, heads)

    with op_category("attention"):
        scale = np.float32(1.0 / math.sqrt(proj.head_dim))
        logits = matmul(proj.q, np.ascontiguousarray(proj.k.transpose(0, 2, 1))) * scale
        out = AttentionProjections.merge_heads(matmul(row_softmax(logits), proj.v))
    with op_category("proj"):
        out = matmul(out, w.proj_w) + w.proj_b

    x_new = (x + out).astype(np.float32)
    everyone = np.arange(n, dtype=np.int64)
    assert state.origin is not None
    trace = LayerTrace(
        layer=state.layer,
        n_in=n,
        n_out=n,
        ratio=0.0,
        pruned=np.zeros(0, dtype=np.int64),
        retained=everyone,
        weights=np.zeros((0, n), dtype=np.float64),
        sizes_before=state.sizes.copy(),
        sizes_after=state.sizes.copy(),
        origin_retained=state.origin.copy(),
    )
    return TokenState(x=x_new, sizes=state.sizes, layer=state.layer, origin=state.origin), trace


def mlp_block(state: TokenState, w: BlockWeights) -> TokenState:
    """MLP sub-block with residual, on the (possibly reduced) token set."""
    h = layer_norm(state.x, w.norm2_w, w.norm2_b)
    with op_category("mlp"):
        hidden = gelu(matmul(h, w.fc1_w) + w.fc1_b)
        out = matmul(hidden, w.fc2_w) + w.fc2_b
    return TokenState(
        x=(state.x + out).astype(np.float32),
        sizes=state.sizes,
        layer=state.layer + 1,
        origin=state.origin,
    )
