"""Token voting, query mixing and proportional attention.

The per-layer reduction step works on the projections of all N input tokens:

1. similarity between head-averaged features (diagonal masked with -inf),
2. weighted voting, each token voting for its most similar peer(s),
3. the highest-tally unprotected tokens are pruned,
4. pruned queries are mixed into retained ones with softmaxed similarity
   weights, sizes tracking how much mass each retained token carries,
5. attention of the mixed queries against the original keys/values with a
   log-size bias.
"""

import math

import numpy as np
from numpy.typing import NDArray

from vomix.core.engine.tensor import (
    argmax_rows,
    argsort_desc,
    matmul,
    op_category,
    record_ops,
    row_softmax,
    topk_rows,
)
from vomix.core.exceptions import ConfigurationError, InvariantViolationError
from vomix.core.models.strategy import AttnMix, Fanout, Feature, Metric, QueryMix
from vomix.core.models.tokens import (
    AttentionProjections,
    MixtureWeights,
    Partition,
    QueryMix as QueryMixResult,
    SimilarityMatrix,
    VoteResult,
)

# Rows per block when computing exact pairwise L2 distances.
_L2_BLOCK = 32

# Guards floor() against binary-fraction artifacts such as 100 * 0.29.
_FLOOR_EPS = 1e-9


def pruned_count(n: int, ratio: float, protected: int = 0) -> int:
    """k_p = floor((N - |protected|) * r), never negative."""
    return max(0, math.floor((n - protected) * ratio + _FLOOR_EPS))


def head_mean(
    proj: AttentionProjections, feature: Feature | str = Feature.k
) -> NDArray[np.float64]:
    """Average a feature over heads: H x N x d_head -> N x d_head (float64)."""
    name = Feature(feature).value
    return proj.feature(name).astype(np.float64).mean(axis=0)


def pairwise_similarity(
    feat: NDArray[np.float64],
    metric: Metric | str = Metric.cosine,
) -> NDArray[np.float32]:
    """N x N similarity of the rows of ``feat`` with a -inf diagonal."""
    metric = Metric(metric)
    n, d = feat.shape
    record_ops(n * n * d)

    if metric is Metric.cosine:
        norms = np.linalg.norm(feat, axis=1)
        unit = np.zeros_like(feat)
        nonzero = norms > 0
        # zero-norm rows stay zero, giving similarity 0 to every other token
        unit[nonzero] = feat[nonzero] / norms[nonzero, None]
        a = np.clip(unit @ unit.T, -1.0, 1.0)
    elif metric is Metric.dot:
        a = feat @ feat.T
    else:
        a = np.empty((n, n), dtype=np.float64)
        for start in range(0, n, _L2_BLOCK):
            block = feat[start : start + _L2_BLOCK]
            diff = block[:, None, :] - feat[None, :, :]
            a[start : start + _L2_BLOCK] = -np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))

    out = a.astype(np.float32)
    np.fill_diagonal(out, -np.inf)
    return out


def compute_key_similarity(
    proj: AttentionProjections,
    feature: Feature | str = Feature.k,
    metric: Metric | str = Metric.cosine,
) -> SimilarityMatrix:
    """Similarity matrix between head-averaged q, k or v features.

    Raises:
        ConfigurationError: If fewer than two tokens are present.
    """
    if proj.num_tokens < 2:
        raise ConfigurationError(f"similarity needs at least 2 tokens, got {proj.num_tokens}")
    return SimilarityMatrix(values=pairwise_similarity(head_mean(proj, feature), metric))


def vote_scores(
    sim: SimilarityMatrix,
    fanout: Fanout | str = Fanout.top1,
    ratio: float = 0.0,
) -> VoteResult:
    """Weighted vote tallies.

    With top1 every token votes for its most similar peer, weighted by that
    similarity; top2 and topr spread votes over the 2 or floor(N*r) most similar
    peers, each weighted by its own similarity.
    """
    fanout = Fanout(fanout)
    a = sim.values
    n = a.shape[0]
    record_ops(n * n, "vote")

    if fanout is Fanout.top1:
        z = argmax_rows(a)
        weights = a[np.arange(n), z].astype(np.float64)
        score = np.bincount(z, weights=weights, minlength=n).astype(np.float64)
        return VoteResult(z=z, score=score, targets=z[:, None])

    k = 2 if fanout is Fanout.top2 else max(1, pruned_count(n, ratio))
    k = min(k, n - 1)
    targets = topk_rows(a, k)
    weights = np.take_along_axis(a, targets, axis=1).astype(np.float64)
    score = np.bincount(targets.ravel(), weights=weights.ravel(), minlength=n).astype(np.float64)
    return VoteResult(z=targets[:, 0].copy(), score=score, targets=targets)


def select_tokens(
    scores: VoteResult | NDArray[np.float64],
    ratio: float,
    protected: tuple[int, ...] | NDArray[np.int64] = (),
) -> Partition:
    """Split tokens into pruned (highest scores) and retained sets.

    Protected rows are never pruned. Ties in score go to the lower index.

    Raises:
        ConfigurationError: If the ratio is outside [0, 1) or too many rows are
            protected for the requested ratio.
    """
    if not 0.0 <= ratio < 1.0:
        raise ConfigurationError(f"pruning ratio {ratio} is outside [0, 1)")

    values = scores.score if isinstance(scores, VoteResult) else np.asarray(scores, np.float64)
    n = values.shape[0]
    prot = np.unique(np.asarray(protected, dtype=np.int64))
    if prot.size and (prot.min() < 0 or prot.max() >= n):
        raise ConfigurationError(f"protected indices {prot.tolist()} out of range for {n} tokens")
    if prot.size > n * (1.0 - ratio) + _FLOOR_EPS:
        raise ConfigurationError(
            f"{prot.size} protected tokens exceed the {n * (1.0 - ratio):.2f} retained slots"
        )

    candidates = np.setdiff1d(np.arange(n, dtype=np.int64), prot)
    k_p = pruned_count(n, ratio, int(prot.size))
    order = argsort_desc(values[candidates])
    pruned = np.sort(candidates[order[:k_p]])
    retained = np.setdiff1d(np.arange(n, dtype=np.int64), pruned)
    return Partition(pruned=pruned.astype(np.int64), retained=retained.astype(np.int64))


def mixture_weights(sim: SimilarityMatrix, part: Partition) -> MixtureWeights:
    """Softmax over the pruned-to-retained block of the similarity matrix."""
    if part.num_pruned == 0:
        return MixtureWeights(w=np.zeros((0, part.num_retained), dtype=np.float64))
    gathered = sim.values[np.ix_(part.pruned, part.retained)]
    return MixtureWeights(w=row_softmax(gathered, dtype=np.float64))


def mix_queries(
    proj: AttentionProjections,
    sizes: NDArray[np.float64],
    part: Partition,
    weights: MixtureWeights,
    mode: QueryMix | str = QueryMix.global_,
) -> QueryMixResult:
    """Fold pruned queries into retained ones, size-weighted.

    ``global`` uses the soft weights, ``max`` sends each pruned token wholly to
    its most similar retained token, ``none`` discards pruned queries (and
    their mass).

    Raises:
        InvariantViolationError: If a mixed size is not positive.
    """
    mode = QueryMix(mode)
    q_flat = AttentionProjections.merge_heads(proj.q)
    s = np.asarray(sizes, dtype=np.float64)
    ret, pr = part.retained, part.pruned

    if mode is QueryMix.none:
        w_eff = np.zeros((part.num_pruned, part.num_retained), dtype=np.float64)
        return QueryMixResult(
            q=np.ascontiguousarray(q_flat[ret]),
            sizes=s[ret].copy(),
            conserves_mass=part.num_pruned == 0,
            weights=w_eff,
        )

    w_eff = weights.w.astype(np.float64)
    if mode is QueryMix.max and part.num_pruned:
        one_hot = np.zeros_like(w_eff)
        one_hot[np.arange(w_eff.shape[0]), argmax_rows(w_eff)] = 1.0
        w_eff = one_hot

    q_weighted = (q_flat * s[:, None]).astype(np.float32)
    mixed = q_weighted[ret] + matmul(w_eff.T.astype(np.float32), q_weighted[pr])
    record_ops(part.num_retained * part.num_pruned)
    s_new = s[ret] + w_eff.T @ s[pr]
    if np.any(s_new <= 0):
        raise InvariantViolationError("mixed size became non-positive")

    q_new = (mixed / s_new[:, None]).astype(np.float32)
    return QueryMixResult(q=q_new, sizes=s_new, conserves_mass=True, weights=w_eff)


def proportional_attention(
    q_mixed: NDArray[np.float32],
    proj: AttentionProjections,
    s_prev: NDArray[np.float64],
    mode: AttnMix | str = AttnMix.prop,
    retained: NDArray[np.int64] | None = None,
    proj_weight: NDArray[np.float32] | None = None,
    proj_bias: NDArray[np.float32] | None = None,
) -> NDArray[np.float32]:
    """Attention of mixed queries against the layer's original keys/values.

    ``prop`` adds log(s_prev) to every logit column so heavier keys get
    proportionally more weight; ``no_prop`` drops the bias; ``none`` attends
    only to the retained keys/values. When projection weights are given the
    concatenated heads are output-projected.

    Raises:
        InvariantViolationError: If any previous size is not positive.
    """
    mode = AttnMix(mode)
    s_prev = np.asarray(s_prev, dtype=np.float64)
    if np.any(s_prev <= 0):
        raise InvariantViolationError("proportional attention needs positive sizes")

    heads, dh = proj.heads, proj.head_dim
    qh = AttentionProjections.split_heads(q_mixed, heads)
    k, v = proj.k, proj.v
    if mode is AttnMix.none:
        if retained is None:
            raise ConfigurationError("attention without mixing needs the retained indices")
        k, v = k[:, retained], v[:, retained]

    with op_category("attention"):
        logits = matmul(qh, np.ascontiguousarray(k.transpose(0, 2, 1))) * np.float32(
            1.0 / math.sqrt(dh)
        )
        if mode is AttnMix.prop:
            logits = logits.astype(np.float64) + np.log(s_prev)[None, None, :]
        attn = row_softmax(logits)
        out = AttentionProjections.merge_heads(matmul(attn, v))

    if proj_weight is not None:
        with op_category("proj"):
            out = matmul(out, proj_weight)
        if proj_bias is not None:
            out = out + proj_bias
    return out.astype(np.float32)
