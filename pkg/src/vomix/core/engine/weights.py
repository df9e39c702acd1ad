"""Weight store, deterministic initialization and the VMTW container.

Container layout (little-endian, no padding)::

    b"VMTW" | u32 version=1 | u32 tensor count
    per tensor: u16 name length | UTF-8 name | u8 ndim | ndim x u64 dims | f32 data

Tensors appear in manifest order.
"""

import logging
import math
import struct
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from vomix.core.engine.rng import SplitMix64
from vomix.core.exceptions import (
    BadMagicError,
    IncompleteWeightsError,
    MalformedWeightsError,
    ShapeMismatchError,
    TruncatedWeightsError,
    UnsupportedVersionError,
)
from vomix.core.models.vit import ViTConfig

logger = logging.getLogger(__name__)

MAGIC = b"VMTW"
VERSION = 1

_HEADER = struct.Struct("<4sII")
_NAME_LEN = struct.Struct("<H")
_NDIM = struct.Struct("<B")
_DIM = struct.Struct("<Q")


def manifest(cfg: ViTConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) list of every tensor the model needs.

    Linear weights are stored input-major (in_features x out_features) so the
    forward pass is ``x @ W + b``. The patch projection flattens each patch as
    (row, column, channel).
    """
    d, hidden = cfg.embed_dim, cfg.mlp_hidden
    entries: list[tuple[str, tuple[int, ...]]] = [
        ("patch_embed.weight", (cfg.patch_dim, d)),
        ("patch_embed.bias", (d,)),
    ]
    if cfg.class_token:
        entries.append(("cls_token", (1, d)))
    entries.append(("pos_embed", (cfg.num_tokens, d)))
    for i in range(cfg.depth):
        p = f"blocks.{i}"
        entries += [
            (f"{p}.norm1.weight", (d,)),
            (f"{p}.norm1.bias", (d,)),
            (f"{p}.attn.qkv.weight", (d, 3 * d)),
            (f"{p}.attn.qkv.bias", (3 * d,)),
            (f"{p}.attn.proj.weight", (d, d)),
            (f"{p}.attn.proj.bias", (d,)),
            (f"{p}.norm2.weight", (d,)),
            (f"{p}.norm2.bias", (d,)),
            (f"{p}.mlp.fc1.weight", (d, hidden)),
            (f"{p}.mlp.fc1.bias", (hidden,)),
            (f"{p}.mlp.fc2.weight", (hidden, d)),
            (f"{p}.mlp.fc2.bias", (d,)),
        ]
    entries += [
        ("norm.weight", (d,)),
        ("norm.bias", (d,)),
        ("head.weight", (d, cfg.classes)),
        ("head.bias", (cfg.classes,)),
    ]
    return entries


@dataclass(frozen=True)
class BlockWeights:
    """Parameters of one pre-norm transformer block."""

    norm1_w: NDArray[np.float32]
    norm1_b: NDArray[np.float32]
    qkv_w: NDArray[np.float32]
    qkv_b: NDArray[np.float32]
    proj_w: NDArray[np.float32]
    proj_b: NDArray[np.float32]
    norm2_w: NDArray[np.float32]
    norm2_b: NDArray[np.float32]
    fc1_w: NDArray[np.float32]
    fc1_b: NDArray[np.float32]
    fc2_w: NDArray[np.float32]
    fc2_b: NDArray[np.float32]


@dataclass(frozen=True)
class WeightStore:
    """Named float32 tensors in manifest order. Treat as immutable."""

    tensors: dict[str, NDArray[np.float32]]

    def __getitem__(self, name: str) -> NDArray[np.float32]:
        return self.tensors[name]

    def __contains__(self, name: object) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    @property
    def nbytes(self) -> int:
        return sum(t.nbytes for t in self.tensors.values())

    def block(self, index: int) -> BlockWeights:
        p = f"blocks.{index}"
        t = self.tensors
        return BlockWeights(
            norm1_w=t[f"{p}.norm1.weight"],
            norm1_b=t[f"{p}.norm1.bias"],
            qkv_w=t[f"{p}.attn.qkv.weight"],
            qkv_b=t[f"{p}.attn.qkv.bias"],
            proj_w=t[f"{p}.attn.proj.weight"],
            proj_b=t[f"{p}.attn.proj.bias"],
            norm2_w=t[f"{p}.norm2.weight"],
            norm2_b=t[f"{p}.norm2.bias"],
            fc1_w=t[f"{p}.mlp.fc1.weight"],
            fc1_b=t[f"{p}.mlp.fc1.bias"],
            fc2_w=t[f"{p}.mlp.fc2.weight"],
            fc2_b=t[f"{p}.mlp.fc2.bias"],
        )

    def validate(self, cfg: ViTConfig) -> None:
        """Check the store against the model manifest.

        Raises:
            IncompleteWeightsError: If any manifest tensor is missing.
            ShapeMismatchError: If a tensor has the wrong shape.
        """
        expected = manifest(cfg)
        missing = [name for name, _ in expected if name not in self.tensors]
        if missing:
            raise IncompleteWeightsError(missing)
        for name, shape in expected:
            found = tuple(self.tensors[name].shape)
            if found != shape:
                raise ShapeMismatchError(name, shape, found)

    def equals(self, other: "WeightStore") -> bool:
        """Bitwise equality, including tensor order."""
        if list(self.tensors) != list(other.tensors):
            return False
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.tensors.values(), other.tensors.values(), strict=True)
        )


def init_weights(cfg: ViTConfig, seed: int) -> WeightStore:
    """Fill every manifest tensor, in order, from one SplitMix64 stream."""
    rng = SplitMix64(seed)
    tensors = {name: rng.init_values(shape) for name, shape in manifest(cfg)}
    logger.debug(f"Initialized {len(tensors)} tensors for {cfg.name} from seed {seed}")
    return WeightStore(tensors=tensors)


def save_weights(store: WeightStore, path: Path) -> None:
    """Write the store as a VMTW container."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, len(store)))
        for name, tensor in store.tensors.items():
            encoded = name.encode("utf-8")
            f.write(_NAME_LEN.pack(len(encoded)))
            f.write(encoded)
            f.write(_NDIM.pack(tensor.ndim))
            for dim in tensor.shape:
                f.write(_DIM.pack(dim))
            f.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    logger.info(f"Wrote {len(store)} tensors to {path}")


class _Reader:
    """Bounds-checked cursor over the container bytes."""

    def __init__(self, data: bytes, path: str) -> None:
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, count: int, what: str) -> bytes:
        end = self.pos + count
        if end > len(self.data):
            raise TruncatedWeightsError(
                f"truncated file: needed {count} bytes for {what} at offset {self.pos}",
                self.path,
            )
        chunk = self.data[self.pos : end]
        self.pos = end
        return chunk

    def unpack(self, fmt: struct.Struct, what: str) -> tuple[int, ...]:
        return fmt.unpack(self.take(fmt.size, what))


def load_weights(path: Path, cfg: ViTConfig | None = None) -> WeightStore:
    """Read a VMTW container, optionally validating it against ``cfg``.

    Raises:
        FileNotFoundError: If the path does not exist.
        BadMagicError, UnsupportedVersionError, TruncatedWeightsError,
        IncompleteWeightsError, ShapeMismatchError, MalformedWeightsError: On
        malformed content.
    """
    path = Path(path)
    data = path.read_bytes()
    reader = _Reader(data, str(path))

    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise BadMagicError(data[: len(MAGIC)], str(path))
    _, version, count = reader.unpack(_HEADER, "header")
    if version != VERSION:
        raise UnsupportedVersionError(version, str(path))

    tensors: dict[str, NDArray[np.float32]] = {}
    for _ in range(count):
        (name_len,) = reader.unpack(_NAME_LEN, "name length")
        raw_name = reader.take(name_len, "name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedWeightsError(
                f"tensor name {raw_name!r} at offset {reader.pos - name_len} is not UTF-8",
                str(path),
            ) from e
        if name in tensors:
            raise MalformedWeightsError(f"duplicate tensor {name!r}", str(path))
        (ndim,) = reader.unpack(_NDIM, f"{name} rank")
        shape = tuple(reader.unpack(_DIM, f"{name} dims")[0] for _ in range(ndim))
        size = math.prod(shape)
        raw = reader.take(4 * size, f"{name} data")
        tensors[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape)

    if reader.pos != len(data):
        raise MalformedWeightsError(
            f"{len(data) - reader.pos} trailing bytes after the last tensor", str(path)
        )

    store = WeightStore(tensors=tensors)
    if cfg is not None:
        store.validate(cfg)
    logger.info(f"Loaded {len(store)} tensors from {path}")
    return store
