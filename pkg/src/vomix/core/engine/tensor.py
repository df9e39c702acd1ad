"""Dense numeric kernels.

All kernels take and return numpy arrays. Activations are float32; reductions
whose error would otherwise grow with the row length (softmax denominators,
layer-norm statistics) are accumulated in float64 and cast back.

Multiply-accumulate counts are recorded into the active :class:`OpCounter`
(if any), under the category set by :func:`op_category`.
"""

from collections import defaultdict
from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from vomix.core.exceptions import ConfigurationError, NumericalError

FloatArray = NDArray[np.float32]
IndexArray = NDArray[np.int64]

DTYPE = np.float32

_GELU_C = np.float32(np.sqrt(2.0 / np.pi))


@dataclass
class OpCounter:
    """Multiply-accumulate tally, one bucket per category."""

    macs: dict[str, int] = field(default_factory=lambda: defaultdict(int))

    def add(self, category: str, count: int) -> None:
        self.macs[category] += int(count)

    def total(self, categories: tuple[str, ...] | None = None) -> int:
        if categories is None:
            return sum(self.macs.values())
        return sum(self.macs.get(c, 0) for c in categories)

    def as_dict(self) -> dict[str, int]:
        return dict(self.macs)


_active_counter: ContextVar[OpCounter | None] = ContextVar("vomix_op_counter", default=None)
_active_category: ContextVar[str] = ContextVar("vomix_op_category", default="other")
_reverse_ties: ContextVar[bool] = ContextVar("vomix_reverse_ties", default=False)


@contextmanager
def counting(counter: OpCounter) -> Iterator[OpCounter]:
    """Route op counts of the enclosed kernels into ``counter``."""
    token = _active_counter.set(counter)
    try:
        yield counter
    finally:
        _active_counter.reset(token)


@contextmanager
def op_category(name: str) -> Iterator[None]:
    """Attribute enclosed multiply-accumulates to ``name``."""
    token = _active_category.set(name)
    try:
        yield
    finally:
        _active_category.reset(token)


@contextmanager
def reversed_tie_break() -> Iterator[None]:
    """Fault injection: make argmax/argsort prefer the highest index on ties.

    Only the self-test uses this, to prove the tie-break suite can fail.
    """
    token = _reverse_ties.set(True)
    try:
        yield
    finally:
        _reverse_ties.reset(token)


def record_ops(count: int, category: str | None = None) -> None:
    """Add ``count`` ops to the active counter, if one is installed."""
    counter = _active_counter.get()
    if counter is not None:
        counter.add(category or _active_category.get(), count)


def matmul(a: np.ndarray, b: np.ndarray) -> FloatArray:
    """Matrix product with shape checking and op accounting.

    Accepts 2-D operands or stacks of matrices with identical leading dims.

    Raises:
        ConfigurationError: If the inner dimensions disagree.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ConfigurationError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ConfigurationError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ConfigurationError(f"matmul batch mismatch: {a.shape} x {b.shape}")

    batch = int(np.prod(a.shape[:-2], dtype=np.int64)) if a.ndim > 2 else 1
    record_ops(batch * a.shape[-2] * a.shape[-1] * b.shape[-1])
    return np.matmul(a.astype(DTYPE, copy=False), b.astype(DTYPE, copy=False))


def row_softmax(m: np.ndarray, dtype: type = DTYPE) -> np.ndarray:
    """Softmax over the last axis, stabilized by row-max subtraction.

    ``-inf`` entries map to exactly 0. The result is cast to ``dtype``.

    Raises:
        NumericalError: If any row is entirely ``-inf``.
    """
    x = np.asarray(m, dtype=np.float64)
    if x.shape[-1] == 0:
        return np.zeros(x.shape, dtype=dtype)
    row_max = x.max(axis=-1, keepdims=True)
    if np.any(np.isneginf(row_max)):
        raise NumericalError("empty softmax support")
    e = np.exp(x - row_max)
    return (e / e.sum(axis=-1, keepdims=True)).astype(dtype)


def layer_norm(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    eps: float = 1e-6,
) -> FloatArray:
    """Per-row normalization to zero mean / unit variance, then affine."""
    if gamma.shape[-1] != x.shape[-1] or beta.shape[-1] != x.shape[-1]:
        raise ConfigurationError(
            f"layer_norm parameter length {gamma.shape[-1]} != feature dim {x.shape[-1]}"
        )
    x64 = np.asarray(x, dtype=np.float64)
    mean = x64.mean(axis=-1, keepdims=True)
    var = x64.var(axis=-1, keepdims=True)
    normed = (x64 - mean) / np.sqrt(var + eps)
    return (normed * gamma + beta).astype(DTYPE)


def gelu(x: np.ndarray) -> FloatArray:
    """GELU, tanh approximation."""
    x32 = np.asarray(x, dtype=DTYPE)
    inner = _GELU_C * (x32 + np.float32(0.044715) * x32 * x32 * x32)
    return (np.float32(0.5) * x32 * (np.float32(1.0) + np.tanh(inner))).astype(DTYPE)


def argsort_desc(v: np.ndarray) -> IndexArray:
    """Stable descending argsort; ties keep the smaller original index first."""
    values = np.asarray(v, dtype=np.float64).ravel()
    if _reverse_ties.get():
        n = values.shape[0]
        return (n - 1 - np.argsort(-values[::-1], kind="stable")).astype(np.int64)
    return np.argsort(-values, kind="stable").astype(np.int64)


def argmax_rows(m: np.ndarray) -> IndexArray:
    """Row-wise argmax; the lowest index wins ties."""
    values = np.asarray(m)
    if _reverse_ties.get():
        n = values.shape[-1]
        return (n - 1 - np.argmax(values[..., ::-1], axis=-1)).astype(np.int64)
    return np.argmax(values, axis=-1).astype(np.int64)


def topk_rows(m: np.ndarray, k: int) -> IndexArray:
    """Indices of the ``k`` largest entries per row, in descending order."""
    values = np.asarray(m, dtype=np.float64)
    if _reverse_ties.get():
        n = values.shape[-1]
        order = n - 1 - np.argsort(-values[..., ::-1], axis=-1, kind="stable")
    else:
        order = np.argsort(-values, axis=-1, kind="stable")
    return order[..., :k].astype(np.int64)
