"""Pydantic schemas for model configuration."""

import enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..shared.exceptions import ConfigurationError


class ModelVariant(str, enum.Enum):
    """Network variants sharing the encoder/decoder recipe."""
    YNET = "ynet"
    UNET = "unet"


class ModelConfig(BaseModel):
    """Schema for the size and depth of a Y-Net (or its U-Net baseline)."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    image_size: int = Field(64, ge=1, description="Square input side S in pixels")
    in_channels: int = Field(3, ge=1, description="Input image channels")
    base_channels: int = Field(8, ge=1, description="Channels B of the first encoder block")
    depth: int = Field(4, ge=1, description="Number of pooling steps L")
    embed_dim: int = Field(4, ge=2, description="Bottleneck embedding length k")
    dropout_rate: float = Field(0.5, ge=0.0, lt=1.0, description="Dropout on the two deepest blocks")
    variant: ModelVariant = Field(ModelVariant.YNET, description="ynet or unet baseline")

    @model_validator(mode="after")
    def _check_divisibility(self) -> "ModelConfig":
        if self.image_size % (2 ** self.depth):
            raise ConfigurationError(
                f"image_size {self.image_size} is not divisible by 2**depth = {2 ** self.depth}",
                field="model.image_size",
            )
        return self

    def channels(self, level: int) -> int:
        """Feature channels of encoder block ``level``."""
        return self.base_channels * 2 ** level

    @property
    def deepest_shape(self) -> tuple:
        side = self.image_size // 2 ** self.depth
        return (self.channels(self.depth), side, side)

    @property
    def flat_size(self) -> int:
        c, h, w = self.deepest_shape
        return c * h * w
