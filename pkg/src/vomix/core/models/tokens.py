"""Array-backed value objects flowing through the engine.

These hold numpy arrays, so they are plain dataclasses rather than pydantic
models; shape invariants are checked in ``__post_init__``.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from vomix.core.exceptions import ConfigurationError


@dataclass
class TokenState:
    """Token embeddings X (N x D) with their mixed sizes s (N).

    ``origin`` maps each current row to the original token index it descends
    from (retained rows keep their original identity).
    """

    x: NDArray[np.float32]
    sizes: NDArray[np.float64]
    layer: int = 0
    origin: NDArray[np.int64] | None = None

    def __post_init__(self) -> None:
        if self.x.ndim != 2:
            raise ConfigurationError(f"token matrix must be 2-D, got shape {self.x.shape}")
        if self.sizes.shape != (self.x.shape[0],):
            raise ConfigurationError(
                f"sizes length {self.sizes.shape} does not match {self.x.shape[0]} tokens"
            )
        if self.origin is None:
            self.origin = np.arange(self.x.shape[0], dtype=np.int64)

    @classmethod
    def fresh(cls, x: NDArray[np.float32]) -> "TokenState":
        """State for the first layer: every token has size 1."""
        return cls(x=x.astype(np.float32), sizes=np.ones(x.shape[0], dtype=np.float64))

    @property
    def num_tokens(self) -> int:
        return int(self.x.shape[0])

    @property
    def dim(self) -> int:
        return int(self.x.shape[1])

    @property
    def total_size(self) -> float:
        return float(self.sizes.sum())

    def protected_rows(self, protected: tuple[int, ...]) -> NDArray[np.int64]:
        """Current row indices of the protected original tokens."""
        assert self.origin is not None
        return np.flatnonzero(np.isin(self.origin, np.asarray(protected, dtype=np.int64)))


@dataclass
class AttentionProjections:
    """Per-head q, k, v tensors of shape H x N x d_head."""

    q: NDArray[np.float32]
    k: NDArray[np.float32]
    v: NDArray[np.float32]

    def __post_init__(self) -> None:
        if not (self.q.shape == self.k.shape == self.v.shape) or self.q.ndim != 3:
            raise ConfigurationError(
                f"q/k/v must share an H x N x d shape, got {self.q.shape}, "
                f"{self.k.shape}, {self.v.shape}"
            )

    @property
    def heads(self) -> int:
        return int(self.q.shape[0])

    @property
    def num_tokens(self) -> int:
        return int(self.q.shape[1])

    @property
    def head_dim(self) -> int:
        return int(self.q.shape[2])

    @property
    def dim(self) -> int:
        return self.heads * self.head_dim

    def feature(self, name: str) -> NDArray[np.float32]:
        return {"q": self.q, "k": self.k, "v": self.v}[name]

    @staticmethod
    def split_heads(x: NDArray[np.float32], heads: int) -> NDArray[np.float32]:
        """N x D -> H x N x d_head."""
        n, d = x.shape
        return np.ascontiguousarray(x.reshape(n, heads, d // heads).transpose(1, 0, 2))

    @staticmethod
    def merge_heads(x: NDArray[np.float32]) -> NDArray[np.float32]:
        """H x N x d_head -> N x D."""
        h, n, dh = x.shape
        return np.ascontiguousarray(x.transpose(1, 0, 2).reshape(n, h * dh))


@dataclass
class SimilarityMatrix:
    """N x N similarity with a -inf diagonal."""

    values: NDArray[np.float32]

    @property
    def num_tokens(self) -> int:
        return int(self.values.shape[0])


@dataclass
class VoteResult:
    """Vote targets and weighted tallies.

    ``z`` is each token's primary (most similar) target; ``targets`` holds every
    target a token voted for (one column for top1).
    """

    z: NDArray[np.int64]
    score: NDArray[np.float64]
    targets: NDArray[np.int64] | None = None


@dataclass
class Partition:
    """Pruned and retained index sets, both ascending."""

    pruned: NDArray[np.int64]
    retained: NDArray[np.int64]

    @property
    def num_pruned(self) -> int:
        return int(self.pruned.shape[0])

    @property
    def num_retained(self) -> int:
        return int(self.retained.shape[0])


@dataclass
class MixtureWeights:
    """Row-stochastic k_p x (N - k_p) weights from pruned to retained tokens."""

    w: NDArray[np.float64]

    @property
    def is_empty(self) -> bool:
        return self.w.shape[0] == 0


@dataclass
class QueryMix:
    """Mixed queries and updated sizes for the retained tokens."""

    q: NDArray[np.float32]
    sizes: NDArray[np.float64]
    conserves_mass: bool
    weights: NDArray[np.float64]


@dataclass
class LayerTrace:
    """What one reduction step did, enough to replay provenance."""

    layer: int
    n_in: int
    n_out: int
    ratio: float
    pruned: NDArray[np.int64]
    retained: NDArray[np.int64]
    weights: NDArray[np.float64]
    sizes_before: NDArray[np.float64]
    sizes_after: NDArray[np.float64]
    origin_retained: NDArray[np.int64]
    conserves_mass: bool = True

    def to_summary(self) -> dict[str, object]:
        return {
            "layer": self.layer,
            "n_in": self.n_in,
            "n_out": self.n_out,
            "ratio": self.ratio,
            "pruned": self.pruned.tolist(),
            "retained_origin": self.origin_retained.tolist(),
            "size_total": float(self.sizes_after.sum()),
            "conserves_mass": self.conserves_mass,
        }


@dataclass
class ForwardResult:
    """Logits plus per-layer traces of a full forward pass."""

    logits: NDArray[np.float32]
    traces: list[LayerTrace] = field(default_factory=list)
    state: TokenState | None = None

    @property
    def trajectory(self) -> list[int]:
        """Token counts entering each layer, then the final count."""
        if not self.traces:
            return [] if self.state is None else [self.state.num_tokens]
        return [t.n_in for t in self.traces] + [self.traces[-1].n_out]
