"""Loop-level reference implementation of the reducing attention block.

Written for readability rather than speed: explicit loops over tokens, heads
and pairs, float64 throughout, and its own scalar SplitMix64. Similarity values
are rounded to float32 once, matching what the engine stores, so that exact
ties mean the same thing on both sides. Callers checking the engine pass its
float32 q/k/v projections in, so both sides start from identical activations.

The result carries ``margin``: the smallest gap between a winning and a losing
candidate in any argmax or top-k decision. Decisions closer than
:data:`DECISION_MARGIN` can legitimately flip under float32 rounding, so callers
skip such trials instead of comparing them.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from vomix.core.engine.weights import BlockWeights
from vomix.core.models.strategy import (
    AttnMix,
    Fanout,
    Metric,
    QueryMix,
    Selection,
    StrategyConfig,
)

DECISION_MARGIN = 1e-5

_MASK = (1 << 64) - 1


@dataclass
class OracleResult:
    pruned: list[int]
    retained: list[int]
    x: NDArray[np.float64]
    sizes: NDArray[np.float64]
    margin: float


def splitmix_uniform(seed: int, count: int) -> list[float]:
    """Scalar SplitMix64, top 24 bits scaled to [0, 1)."""
    state = seed & _MASK
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & _MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        z = z ^ (z >> 31)
        out.append((z >> 40) / float(1 << 24))
    return out


def _dot(a: NDArray[np.float64], b: NDArray[np.float64]) -> float:
    return float(sum(float(p) * float(q) for p, q in zip(a, b, strict=True)))


def _gap(values: list[float], k: int) -> float:
    """Gap between the k-th and (k+1)-th largest of ``values``."""
    if k <= 0 or k >= len(values):
        return math.inf
    ordered = sorted(values, reverse=True)
    return ordered[k - 1] - ordered[k]


def _ranked(values: list[float], candidates: list[int]) -> list[int]:
    return sorted(candidates, key=lambda j: (-values[j], j))


def _layer_norm(x: NDArray[np.float64], gamma: NDArray, beta: NDArray) -> NDArray[np.float64]:
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        mean = sum(x[i]) / x.shape[1]
        var = sum((v - mean) ** 2 for v in x[i]) / x.shape[1]
        out[i] = (x[i] - mean) / math.sqrt(var + 1e-6) * gamma + beta
    return out


def _similarity(feat: list[NDArray[np.float64]], metric: Metric) -> list[list[float]]:
    n = len(feat)
    a = [[-math.inf] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if metric is Metric.cosine:
                ni, nj = math.sqrt(_dot(feat[i], feat[i])), math.sqrt(_dot(feat[j], feat[j]))
                value = 0.0 if ni == 0 or nj == 0 else _dot(feat[i], feat[j]) / (ni * nj)
                value = min(1.0, max(-1.0, value))
            elif metric is Metric.dot:
                value = _dot(feat[i], feat[j])
            else:
                value = -math.sqrt(sum((p - q) ** 2 for p, q in zip(feat[i], feat[j], strict=True)))
            a[i][j] = float(np.float32(value))
    return a


def reference_attention_block(
    x: NDArray[np.float32],
    sizes: NDArray[np.float64],
    w: BlockWeights,
    heads: int,
    ratio: float,
    strategy: StrategyConfig,
    protected_rows: list[int],
    layer: int = 0,
    qkv: NDArray[np.float32] | None = None,
) -> OracleResult:
    """Reducing attention sub-block (norm, projections, vote, mix, attend, residual).

    ``qkv`` takes the N x 3D float32 projections computed elsewhere; without it
    they are recomputed here in float64 and rounded to float32.
    """
    n, d = x.shape
    dh = d // heads
    margins = [math.inf]

    if qkv is None:
        # projections, rounded to the engine's activation precision
        h = _layer_norm(
            x.astype(np.float64), w.norm1_w.astype(np.float64), w.norm1_b.astype(np.float64)
        )
        qkv = (h @ w.qkv_w.astype(np.float64) + w.qkv_b).astype(np.float32)
    proj = qkv.astype(np.float64)
    q = [[proj[i, hd * dh : (hd + 1) * dh] for i in range(n)] for hd in range(heads)]
    k = [[proj[i, d + hd * dh : d + (hd + 1) * dh] for i in range(n)] for hd in range(heads)]
    v = [
        [proj[i, 2 * d + hd * dh : 2 * d + (hd + 1) * dh] for i in range(n)] for hd in range(heads)
    ]

    # head-wise mean of the chosen feature, then pairwise similarity
    source = {"q": q, "k": k, "v": v}[strategy.feature.value]
    feat = [sum(source[hd][i] for hd in range(heads)) / heads for i in range(n)]
    a = _similarity(feat, strategy.metric)

    # scores
    if strategy.selection is Selection.vote:
        score = [0.0] * n
        if strategy.fanout is Fanout.top1:
            fan = 1
        elif strategy.fanout is Fanout.top2:
            fan = 2
        else:
            fan = max(1, math.floor(n * ratio + 1e-9))
        fan = min(fan, n - 1)
        for i in range(n):
            others = [j for j in range(n) if j != i]
            row = a[i]
            margins.append(_gap([row[j] for j in others], fan))
            for j in _ranked(row, others)[:fan]:
                score[j] += row[j]
    elif strategy.selection is Selection.max_sim:
        score = [sum(a[i][j] for j in range(n) if j != i) / (n - 1) for i in range(n)]
    else:
        score = splitmix_uniform(strategy.random_seed + layer, n)

    # selection
    candidates = [i for i in range(n) if i not in protected_rows]
    k_p = max(0, math.floor((n - len(protected_rows)) * ratio + 1e-9))
    margins.append(_gap([score[c] for c in candidates], k_p))
    pruned = sorted(_ranked(score, candidates)[:k_p])
    retained = [i for i in range(n) if i not in pruned]

    # mixture weights
    mix = []
    for p in pruned:
        row = [a[p][r] for r in retained]
        top = max(row)
        e = [math.exp(value - top) for value in row]
        total = sum(e)
        weights = [value / total for value in e]
        if strategy.query_mix is QueryMix.max:
            margins.append(_gap(weights, 1))
            best = _ranked(weights, list(range(len(retained))))[0]
            weights = [1.0 if j == best else 0.0 for j in range(len(retained))]
        mix.append(weights)

    # query mixing on full-width rows
    q_flat = [np.concatenate([q[hd][i] for hd in range(heads)]) for i in range(n)]
    mixed_q = []
    new_sizes = []
    for col, i in enumerate(retained):
        if strategy.query_mix is QueryMix.none:
            mixed_q.append(q_flat[i])
            new_sizes.append(float(sizes[i]))
            continue
        acc = q_flat[i] * sizes[i]
        s_new = float(sizes[i])
        for row, j in enumerate(pruned):
            acc = acc + mix[row][col] * q_flat[j] * sizes[j]
            s_new += mix[row][col] * float(sizes[j])
        mixed_q.append(acc / s_new)
        new_sizes.append(s_new)

    # attention of mixed queries against the original keys and values
    keys = retained if strategy.attn_mix is AttnMix.none else list(range(n))
    out = np.zeros((len(retained), d))
    for hd in range(heads):
        for row in range(len(retained)):
            qi = mixed_q[row][hd * dh : (hd + 1) * dh]
            logits = []
            for t in keys:
                value = _dot(qi, k[hd][t]) / math.sqrt(dh)
                if strategy.attn_mix is AttnMix.prop:
                    value += math.log(sizes[t])
                logits.append(value)
            top = max(logits)
            e = [math.exp(value - top) for value in logits]
            total = sum(e)
            for weight, t in zip(e, keys, strict=True):
                out[row, hd * dh : (hd + 1) * dh] += (weight / total) * v[hd][t]

    projected = out @ w.proj_w.astype(np.float64) + w.proj_b
    x_out = x[retained].astype(np.float64) + projected
    return OracleResult(
        pruned=pruned,
        retained=retained,
        x=x_out,
        sizes=np.asarray(new_sizes, dtype=np.float64),
        margin=min(margins),
    )
