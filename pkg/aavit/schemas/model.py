from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from aavit.tensor import Precision


class HeadKind(str, Enum):
    BASELINE_VIT = "BaselineViT"
    AAMLP_NO_ATTENTION = "AAMLPNoAttention"
    AAMLP = "AAMLP"

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]

    @property
    def pools(self) -> bool:
        return self is not HeadKind.BASELINE_VIT

    @property
    def attends(self) -> bool:
        return self is HeadKind.AAMLP


_DISPLAY_NAMES = {
    HeadKind.AAMLP: "AAViT",
    HeadKind.AAMLP_NO_ATTENTION: "AAViT w/o attention",
    HeadKind.BASELINE_VIT: "ViT",
}


class ModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    image_size: int = Field(default=256, gt=0, description="Square input side in pixels")
    patch_size: int = Field(default=16, gt=0, description="Square patch side in pixels")
    embed_dim: int = Field(default=768, gt=0, description="Token width d")
    depth: int = Field(default=12, ge=0, description="Number of pre-norm encoder blocks")
    num_heads: int = Field(default=12, gt=0, description="Self-attention heads; must divide d")
    encoder_mlp_ratio: int = Field(default=4, gt=0, description="Encoder MLP width as a multiple of d")
    mlp_hidden: int = Field(default=768, gt=0, description="Width h of the head's first FC layer")
    head_kind: HeadKind = Field(default=HeadKind.AAMLP, description="Classification head variant")
    pool_out: int = Field(default=8, gt=0, description="Adaptive pooling output size P (<= h)")
    num_classes: int = Field(default=2, ge=2, description="Class count C; class 0 is real access")
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="Parameter initialisation seed")
    precision: Precision = Field(default=Precision.STANDARD, description="Scalar mode of the parameters")

    @model_validator(mode="after")
    def check_geometry(self) -> "ModelConfig":
        if self.image_size % self.patch_size:
            raise ValueError(
                f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}"
            )
        if self.embed_dim % self.num_heads:
            raise ValueError(f"embed_dim {self.embed_dim} is not divisible by num_heads {self.num_heads}")
        if self.pool_out > self.mlp_hidden:
            raise ValueError(f"pool_out {self.pool_out} exceeds mlp_hidden {self.mlp_hidden}")
        return self

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid ** 2

    @property
    def patch_dim(self) -> int:
        return self.patch_size ** 2 * 3

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    @property
    def encoder_hidden(self) -> int:
        return self.embed_dim * self.encoder_mlp_ratio

    @property
    def head_features(self) -> int:
        """Width of the flattened vector FC2 consumes."""
        return self.num_patches * (self.pool_out if self.head_kind.pools else 1)
