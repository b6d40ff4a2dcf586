"""Unit tests for model configuration."""

import pytest
from pydantic import ValidationError as SchemaError

from SRC.shared.exceptions import ConfigurationError
from SRC.ynet.schemas import ModelConfig, ModelVariant


@pytest.mark.unit
@pytest.mark.model
class TestModelConfig:
    """Test cases for ModelConfig validation and derived shapes."""

    def test_defaults(self):
        """Test the desk-scale defaults (happy path)."""
        config = ModelConfig()

        assert (config.image_size, config.base_channels, config.depth, config.embed_dim) == (64, 8, 4, 4)
        assert config.dropout_rate == 0.5
        assert config.variant is ModelVariant.YNET

    def test_deepest_shape(self):
        """Test S=64, B=8, L=4 bottoms out at [128, 4, 4] with 2048 features."""
        config = ModelConfig(image_size=64, base_channels=8, depth=4)

        assert config.deepest_shape == (128, 4, 4)
        assert config.flat_size == 2048

    def test_indivisible_size(self):
        """Test S not divisible by 2^L names the field (negative case)."""
        with pytest.raises(ConfigurationError) as exc:
            ModelConfig(image_size=10, depth=2)

        assert exc.value.field == "model.image_size"

    @pytest.mark.parametrize(
        "field,value", [("embed_dim", 1), ("depth", 0), ("base_channels", 0), ("dropout_rate", 1.0)]
    )
    def test_field_bounds(self, field, value):
        """Test out-of-range fields are rejected (negative case)."""
        with pytest.raises(SchemaError):
            ModelConfig(**{field: value})

    def test_unknown_field(self):
        """Test unknown keys are rejected (negative case)."""
        with pytest.raises(SchemaError):
            ModelConfig(width=3)
