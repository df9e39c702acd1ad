"""Model shape configuration, pruning schedules and baked presets."""

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ViTConfig(BaseModel):
    """Shape of a plain ViT classifier."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(default="custom", description="Preset or user label")
    image_size: int = Field(..., ge=1, description="Square input side in pixels")
    patch_size: int = Field(..., ge=1, description="Square patch side in pixels")
    channels: int = Field(default=3, ge=1)
    depth: int = Field(..., ge=1, description="Transformer layers (L)")
    embed_dim: int = Field(..., ge=1, description="Token width (D)")
    heads: int = Field(..., ge=1, description="Attention heads (H)")
    mlp_ratio: float = Field(default=4.0, gt=0)
    classes: int = Field(default=1000, ge=1)
    class_token: bool = True

    @model_validator(mode="after")
    def _check_divisibility(self) -> Self:
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}"
            )
        if self.embed_dim % self.heads != 0:
            raise ValueError(f"heads {self.heads} does not divide embed_dim {self.embed_dim}")
        return self

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_size * self.grid_size

    @property
    def num_tokens(self) -> int:
        """Initial token count N0 (patches plus the optional class token)."""
        return self.num_patches + (1 if self.class_token else 0)

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def mlp_hidden(self) -> int:
        return int(self.embed_dim * self.mlp_ratio)

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch_size * self.patch_size

    def default_protected(self) -> tuple[int, ...]:
        """Class token is protected when the model has one."""
        return (0,) if self.class_token else ()


class PruneSchedule(BaseModel):
    """Per-layer pruning ratios, one per transformer layer."""

    model_config = ConfigDict(frozen=True)

    spec: str = Field(..., description="Schedule string the ratios were expanded from")
    ratios: tuple[float, ...]

    @model_validator(mode="after")
    def _check_ratios(self) -> Self:
        for layer, r in enumerate(self.ratios):
            if not 0.0 <= r < 1.0:
                raise ValueError(f"ratio {r} at layer {layer} is outside [0, 1)")
        return self

    @property
    def depth(self) -> int:
        return len(self.ratios)

    @property
    def is_zero(self) -> bool:
        return all(r == 0.0 for r in self.ratios)


# (depth, embed_dim, heads, patch_size, image_size)
_PRESET_SHAPES: dict[str, tuple[int, int, int, int, int]] = {
    "vit-s16-224": (12, 384, 6, 16, 224),
    "vit-b16-224": (12, 768, 12, 16, 224),
    "vit-l16-224": (24, 1024, 16, 16, 224),
    "vit-h14-224": (32, 1280, 16, 14, 224),
    "vit-b16-384": (12, 768, 12, 16, 384),
    "vit-l16-512": (24, 1024, 16, 16, 512),
    "vit-h14-518": (32, 1280, 16, 14, 518),
}

PRESETS: dict[str, ViTConfig] = {
    name: ViTConfig(
        name=name,
        depth=depth,
        embed_dim=dim,
        heads=heads,
        patch_size=patch,
        image_size=size,
    )
    for name, (depth, dim, heads, patch, size) in _PRESET_SHAPES.items()
}

# Desk-scale model for tests and the self-test.
PRESETS["vit-tiny-32"] = ViTConfig(
    name="vit-tiny-32",
    depth=4,
    embed_dim=64,
    heads=4,
    patch_size=8,
    image_size=32,
    classes=10,
)
