"""Unit tests for Y-Net assembly, forward passes and backward passes."""

import numpy as np
import pytest

from SRC.shared.exceptions import ConfigurationError, ContractViolationError, ShapeError, ValidationError
from SRC.tensor_nn.gradcheck import numerical_gradient, relative_error
from SRC.tensor_nn.layers import bce_loss
from SRC.ynet.models import EMBED_LAYER, EXPAND_LAYER, decoder_layer_names, encoder_layer_names
from SRC.ynet.schemas import ModelConfig, ModelVariant
from SRC.ynet.service import (
    _decode,
    _encode,
    analytic_param_count,
    backward,
    backward_seg,
    build,
    build_unet_baseline,
    closest_config,
    forward_embed,
    forward_seg,
    forward_seg_traced,
)


def _random_legal_configs(count, seed=0):
    rng = np.random.default_rng(seed)
    configs = []
    for _ in range(count):
        depth = int(rng.integers(1, 4))
        configs.append(
            ModelConfig(
                image_size=2 ** depth * int(rng.integers(1, 4)),
                in_channels=int(rng.integers(1, 4)),
                base_channels=int(rng.integers(1, 5)),
                depth=depth,
                embed_dim=int(rng.integers(2, 6)),
                variant=ModelVariant.YNET if rng.random() < 0.7 else ModelVariant.UNET,
            )
        )
    return configs


def _sampled_parameters(model, count, rng):
    names = [name for name, _ in model.named_tensors()]
    picks = []
    for _ in range(count):
        name = names[int(rng.integers(len(names)))]
        picks.append((name, int(rng.integers(model.tensors()[name].size))))
    return picks


@pytest.mark.unit
@pytest.mark.model
class TestBuild:
    """Test cases for model assembly."""

    def test_desk_scale_bottleneck(self):
        """Test S=64, B=8, L=4, k=4 gives an 8196-parameter dense(4) (happy path)."""
        model = build(ModelConfig(image_size=64, base_channels=8, depth=4, embed_dim=4), seed=0)

        assert model.layers[EMBED_LAYER].weights.shape == (4, 2048)
        assert model.layers[EMBED_LAYER].size == 8196

    def test_channel_doubling(self):
        """Test encoder channels double per level."""
        model = build(ModelConfig(image_size=32, base_channels=3, depth=3), seed=0)

        for level in range(4):
            assert model.layers[f"enc.block{level}.conv2"].out_size == 3 * 2 ** level

    def test_minimal_config(self):
        """Test L=1, B=1, k=2, S=4 builds and runs forward (edge case)."""
        config = ModelConfig(image_size=4, in_channels=3, base_channels=1, depth=1, embed_dim=2)
        model = build(config, seed=0)
        probs = forward_seg(model, np.random.default_rng(0).random((3, 4, 4)).astype(np.float32))

        assert probs.shape == (1, 4, 4)
        assert forward_embed(model, np.zeros((3, 4, 4), dtype=np.float32)).shape == (2,)

    def test_analytic_count_matches_enumeration(self):
        """Test analytic and enumerated counts agree and shapes round-trip for 20 random configs."""
        rng = np.random.default_rng(99)
        for config in _random_legal_configs(20):
            model = build(config, seed=1)
            image = rng.random((config.in_channels, config.image_size, config.image_size)).astype(np.float32)

            assert model.param_count() == analytic_param_count(config)
            assert forward_seg(model, image).shape == (1, config.image_size, config.image_size)

    def test_unet_count_difference(self):
        """Test the U-Net baseline drops exactly both bottleneck dense layers."""
        config = ModelConfig(image_size=32, base_channels=4, depth=3, embed_dim=4)
        ynet = build(config, seed=0)
        unet = build_unet_baseline(config, seed=0)
        flat, k = config.flat_size, config.embed_dim

        assert unet.param_count() == ynet.param_count() - (flat * k + k + k * flat + flat)
        assert EMBED_LAYER not in unet.layers and EXPAND_LAYER not in unet.layers

    def test_same_seed_same_weights(self, tiny_config):
        """Test initialisation is a pure function of the seed."""
        a, b = build(tiny_config, seed=5), build(tiny_config, seed=5)

        for (name, x), (_, y) in zip(a.named_tensors(), b.named_tensors()):
            np.testing.assert_array_equal(x, y, err_msg=name)

    def test_invalid_config(self):
        """Test S not divisible by 2^L is a configuration error (negative case)."""
        with pytest.raises(ConfigurationError):
            build(ModelConfig(image_size=12, depth=3), seed=0)


@pytest.mark.unit
@pytest.mark.model
class TestForward:
    """Test cases for segmentation and embedding forward passes."""

    def test_output_shape_and_range(self):
        """Test S=64 output is [1, 64, 64] in (0, 1)."""
        model = build(ModelConfig(), seed=0)
        probs = forward_seg(model, np.random.default_rng(0).random((3, 64, 64)).astype(np.float32))

        assert probs.shape == (1, 64, 64)
        assert np.all((probs > 0) & (probs < 1))

    def test_eval_mode_deterministic(self, tiny_model, rng):
        """Test two eval-mode calls are bit-identical."""
        image = rng.random((3, 8, 8)).astype(np.float32)

        np.testing.assert_array_equal(forward_seg(tiny_model, image), forward_seg(tiny_model, image))

    def test_training_mode_uses_dropout(self, tiny_model, rng):
        """Test dropout changes the training-mode output."""
        image = rng.random((3, 8, 8)).astype(np.float32)
        train_out = forward_seg(tiny_model, image, training=True, rng=np.random.default_rng(3))

        assert not np.array_equal(train_out, forward_seg(tiny_model, image))

    def test_untrained_output_scale(self):
        """Test the mean untrained output over 10 seeds lies in (0.2, 0.8)."""
        rng = np.random.default_rng(0)
        means = [
            float(forward_seg(build(ModelConfig(), seed=seed), rng.random((3, 64, 64)).astype(np.float32)).mean())
            for seed in range(10)
        ]

        assert 0.2 < np.mean(means) < 0.8

    def test_embedding_length_and_determinism(self, tiny_model, rng):
        """Test z has length k and is deterministic in eval mode."""
        image = rng.random((3, 8, 8)).astype(np.float32)
        z = forward_embed(tiny_model, image)

        assert z.shape == (4,)
        assert np.all(np.isfinite(z))
        np.testing.assert_array_equal(z, forward_embed(tiny_model, image))

    def test_distinct_images_distinct_embeddings(self, small_config, rng):
        """Test 100 random image pairs never collide in embedding space."""
        model = build(small_config, seed=0)
        for _ in range(100):
            a = rng.random((3, 16, 16)).astype(np.float32)
            b = rng.random((3, 16, 16)).astype(np.float32)

            assert not np.array_equal(forward_embed(model, a), forward_embed(model, b))

    def test_skip_connection_is_live(self, tiny_model, rng):
        """Test zeroing a skip input changes the segmentation output."""
        encoder = _encode(tiny_model, rng.random((3, 8, 8)).astype(np.float32), False, None)
        baseline = _decode(tiny_model, encoder).probs
        encoder.skips[0] = np.zeros_like(encoder.skips[0])

        assert not np.array_equal(baseline, _decode(tiny_model, encoder).probs)

    def test_shape_mismatch(self, tiny_model):
        """Test a wrongly sized image is rejected (negative case)."""
        with pytest.raises(ShapeError):
            forward_seg(tiny_model, np.zeros((3, 16, 16), dtype=np.float32))

    def test_unet_has_no_embedding(self, tiny_config):
        """Test the U-Net baseline refuses forward_embed (negative case)."""
        with pytest.raises(ValidationError):
            forward_embed(build_unet_baseline(tiny_config, seed=0), np.zeros((3, 8, 8), dtype=np.float32))


@pytest.mark.unit
@pytest.mark.model
class TestBackward:
    """Test cases for full-model gradients."""

    def test_gradient_shapes_mirror_parameters(self, tiny_model, rng):
        """Test one gradient per parameter tensor with matching shape."""
        _, trace = forward_seg_traced(tiny_model, rng.random((3, 8, 8)).astype(np.float32))
        _, grads = backward_seg(tiny_model, trace, (rng.random((8, 8)) > 0.5).astype(np.float32))
        tensors = tiny_model.tensors()

        assert set(grads) == set(tensors)
        for name, grad in grads.items():
            assert grad.shape == tensors[name].shape

    def test_zero_upstream_gives_zero_gradients(self, tiny_model, rng):
        """Test a zero logit gradient yields all-zero parameter gradients (edge case)."""
        probs, trace = forward_seg_traced(tiny_model, rng.random((3, 8, 8)).astype(np.float32))
        grads = backward(tiny_model, trace, grad_logits=np.zeros_like(probs))

        assert all(not np.any(g) for g in grads.values())

    def test_bottleneck_receives_gradient(self, small_config, rng):
        """Test dense(k) gets a nonzero gradient under segmentation loss."""
        model = build(small_config, seed=2)
        _, trace = forward_seg_traced(model, rng.random((3, 16, 16)).astype(np.float32))
        _, grads = backward_seg(model, trace, (rng.random((16, 16)) > 0.5).astype(np.float32))

        assert np.linalg.norm(grads[f"{EMBED_LAYER}.weight"]) > 0

    def test_embedding_gradient_reaches_encoder_only(self, tiny_model, rng):
        """Test a z-only backward touches encoder and dense(k), not the decoder."""
        from SRC.ynet.service import forward_embed_traced

        z, trace = forward_embed_traced(tiny_model, rng.random((3, 8, 8)).astype(np.float32))
        grads = backward(tiny_model, trace, grad_z=np.ones_like(z))
        layers = encoder_layer_names(tiny_model.config) + [EMBED_LAYER]
        expected = {f"{n}.{p}" for n in layers for p in ("weight", "bias")}

        assert set(grads) == expected
        assert not any(name.startswith(tuple(decoder_layer_names(tiny_model.config))) for name in grads)

    def test_finite_differences_64bit(self, tiny_config, rng):
        """Test 20 sampled parameters against central differences in 64-bit mode (rel. err < 1e-5)."""
        model = build(tiny_config, seed=3, dtype=np.float64)
        image = rng.random((3, 8, 8))
        target = (rng.random((8, 8)) > 0.5).astype(np.float64)
        _, trace = forward_seg_traced(model, image)
        _, grads = backward_seg(model, trace, target)
        tensors = model.tensors()

        def loss():
            return bce_loss(forward_seg(model, image), target[None])

        analytic, numeric = [], []
        for name, index in _sampled_parameters(model, 20, rng):
            analytic.append(grads[name].reshape(-1)[index])
            numeric.append(numerical_gradient(loss, tensors[name], step=1e-6, indices=[index])[0])

        assert relative_error(np.array(analytic), np.array(numeric)) < 1e-5

    def test_finite_differences_32bit(self, tiny_model, rng):
        """Test 20 sampled parameters against central differences in 32-bit (rel. err < 1e-2)."""
        image = rng.random((3, 8, 8)).astype(np.float32)
        target = (rng.random((8, 8)) > 0.5).astype(np.float32)
        _, trace = forward_seg_traced(tiny_model, image)
        _, grads = backward_seg(tiny_model, trace, target)
        tensors = tiny_model.tensors()

        def loss():
            return bce_loss(forward_seg(tiny_model, image), target[None])

        analytic, numeric = [], []
        for name, index in _sampled_parameters(tiny_model, 20, rng):
            analytic.append(grads[name].reshape(-1)[index])
            numeric.append(numerical_gradient(loss, tensors[name], step=1e-3, indices=[index])[0])

        assert relative_error(np.array(analytic), np.array(numeric)) < 1e-2

    def test_missing_trace(self, tiny_model):
        """Test backward without a forward trace is a contract violation (negative case)."""
        with pytest.raises(ContractViolationError):
            backward_seg(tiny_model, None, np.zeros((8, 8)))

    def test_target_shape_mismatch(self, tiny_model, rng):
        """Test a target of the wrong size is rejected (negative case)."""
        _, trace = forward_seg_traced(tiny_model, rng.random((3, 8, 8)).astype(np.float32))

        with pytest.raises(ShapeError):
            backward_seg(tiny_model, trace, np.zeros((4, 4)))


@pytest.mark.unit
@pytest.mark.model
class TestParameterSearch:
    """Test cases for the parameter-budget search."""

    def test_published_budget(self):
        """Test a 512x512x3 config lands within 5% of 15,510,917 parameters."""
        config, count = closest_config(15_510_917, image_size=512, in_channels=3)

        assert abs(count - 15_510_917) / 15_510_917 < 0.05
        assert count == analytic_param_count(config)
        assert 512 % 2 ** config.depth == 0

    def test_exact_hit(self):
        """Test the count of an existing config is found exactly (edge case)."""
        target = analytic_param_count(ModelConfig(image_size=32, base_channels=3, depth=2))
        _, count = closest_config(target, image_size=32, max_base_channels=8, max_depth=3)

        assert count == target
