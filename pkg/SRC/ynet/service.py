"""Y-Net assembly, forward passes and full-model backward pass.

Encoder block i runs two 3x3 convolutions at B * 2**i channels, each
followed by ReLU; blocks 0..L-1 are max-pooled. The Y-Net bottleneck
flattens the deepest map into dense(k) (the embedding tapped by the
clustering head) and expands it back, so it sits on the segmentation path.
Each decoder stage upsamples with a stride-2 transposed convolution,
concatenates the matching encoder output and applies two 3x3 convolutions.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..shared.exceptions import ContractViolationError, ShapeError, ValidationError
from ..tensor_nn import layers as nn
from ..tensor_nn.params import DTYPE, LayerKind, LayerParams, init_layer
from .models import EMBED_LAYER, EXPAND_LAYER, HEAD_LAYER, YNet
from .schemas import ModelConfig, ModelVariant

logger = logging.getLogger(__name__)

Gradients = Dict[str, np.ndarray]


@dataclass
class BlockTrace:
    conv1: nn.ConvCache
    pre1: np.ndarray
    conv2: nn.ConvCache
    pre2: np.ndarray
    dropout: nn.DropoutMask


@dataclass
class EncoderTrace:
    """Caches of one encoder pass, owned by the caller."""
    image: np.ndarray
    blocks: List[BlockTrace] = field(default_factory=list)
    pools: List[nn.PoolCache] = field(default_factory=list)
    skips: List[np.ndarray] = field(default_factory=list)
    deep: Optional[np.ndarray] = None
    embed: Optional[nn.DenseCache] = None
    z: Optional[np.ndarray] = None


@dataclass
class StageTrace:
    up: nn.TConvCache
    skip_channels: int
    conv1: nn.ConvCache
    pre1: np.ndarray
    conv2: nn.ConvCache
    pre2: np.ndarray


@dataclass
class DecoderTrace:
    expand: Optional[nn.DenseCache] = None
    expand_pre: Optional[np.ndarray] = None
    stages: List[StageTrace] = field(default_factory=list)
    head: Optional[nn.ConvCache] = None
    probs: Optional[np.ndarray] = None


@dataclass
class ForwardTrace:
    encoder: EncoderTrace
    decoder: DecoderTrace

    @property
    def probs(self) -> np.ndarray:
        return self.decoder.probs


def analytic_param_count(config: ModelConfig) -> int:
    """Closed-form autoencoder parameter count for a configuration."""
    total = 0
    n_in = config.in_channels
    for level in range(config.depth + 1):
        c = config.channels(level)
        total += n_in * c * 9 + c + c * c * 9 + c
        n_in = c
    if config.variant is ModelVariant.YNET:
        flat, k = config.flat_size, config.embed_dim
        total += flat * k + k + k * flat + flat
    for level in reversed(range(config.depth)):
        c = config.channels(level)
        total += 2 * c * c * 4 + c
        total += 2 * c * c * 9 + c + c * c * 9 + c
    total += config.channels(0) + 1
    return total


def closest_config(
    target: int,
    image_size: int = 512,
    in_channels: int = 3,
    embed_dim: int = 4,
    max_base_channels: int = 64,
    max_depth: int = 7,
) -> Tuple[ModelConfig, int]:
    """Legal Y-Net config whose parameter count is nearest target.

    Searches base_channels x depth; ties go to the shallower, narrower config.
    """
    best: Optional[Tuple[int, ModelConfig, int]] = None
    for depth in range(1, max_depth + 1):
        if image_size % 2 ** depth:
            break
        for base in range(1, max_base_channels + 1):
            config = ModelConfig(
                image_size=image_size,
                in_channels=in_channels,
                base_channels=base,
                depth=depth,
                embed_dim=embed_dim,
            )
            count = analytic_param_count(config)
            gap = abs(count - target)
            if best is None or gap < best[0]:
                best = (gap, config, count)
    if best is None:
        raise ValidationError(f"no legal depth for image_size {image_size}")
    return best[1], best[2]


def build(config: ModelConfig, seed: int, dtype: type = DTYPE) -> YNet:
    """Build a freshly initialized network.

    Preconditions: config invariants hold (enforced by ModelConfig)
    Postconditions: param_count() equals analytic_param_count(config)
    Raises: ConfigurationError
    """
    rng = np.random.default_rng(seed)
    layers: Dict[str, LayerParams] = {}
    n_in = config.in_channels
    for level in range(config.depth + 1):
        c = config.channels(level)
        layers[f"enc.block{level}.conv1"] = init_layer(LayerKind.CONV3X3, n_in, c, rng, dtype)
        layers[f"enc.block{level}.conv2"] = init_layer(LayerKind.CONV3X3, c, c, rng, dtype)
        n_in = c
    if config.variant is ModelVariant.YNET:
        layers[EMBED_LAYER] = init_layer(LayerKind.DENSE, config.flat_size, config.embed_dim, rng, dtype)
        layers[EXPAND_LAYER] = init_layer(LayerKind.DENSE, config.embed_dim, config.flat_size, rng, dtype)
    for stage in range(config.depth):
        level = config.depth - 1 - stage
        c = config.channels(level)
        layers[f"dec.stage{stage}.up"] = init_layer(LayerKind.TCONV2X2, 2 * c, c, rng, dtype)
        layers[f"dec.stage{stage}.conv1"] = init_layer(LayerKind.CONV3X3, 2 * c, c, rng, dtype)
        layers[f"dec.stage{stage}.conv2"] = init_layer(LayerKind.CONV3X3, c, c, rng, dtype)
    layers[HEAD_LAYER] = init_layer(LayerKind.CONV1X1, config.channels(0), 1, rng, dtype)
    model = YNet(config=config, layers=layers)
    logger.debug("built %s with %d parameters", config.variant.value, model.param_count())
    return model


def build_unet_baseline(config: ModelConfig, seed: int, dtype: type = DTYPE) -> YNet:
    """U-Net baseline: same encoder, skips and decoder, no dense bottleneck."""
    return build(config.model_copy(update={"variant": ModelVariant.UNET}), seed, dtype)


def _check_image(model: YNet, image: np.ndarray) -> np.ndarray:
    cfg = model.config
    expected = (cfg.in_channels, cfg.image_size, cfg.image_size)
    if image.shape != expected:
        raise ShapeError(f"image shape {tuple(image.shape)} does not match model input {expected}")
    return np.asarray(image, dtype=model.dtype)


def _block_forward(
    model: YNet,
    level: int,
    x: np.ndarray,
    training: bool,
    rng: Optional[np.random.Generator],
) -> Tuple[np.ndarray, BlockTrace]:
    pre1, conv1 = nn.conv2d_forward(x, model.layers[f"enc.block{level}.conv1"])
    pre2, conv2 = nn.conv2d_forward(nn.relu(pre1), model.layers[f"enc.block{level}.conv2"])
    rate = model.config.dropout_rate if level >= model.config.depth - 1 else 0.0
    out, mask = nn.dropout_apply(nn.relu(pre2), rate, training, rng)
    return out, BlockTrace(conv1=conv1, pre1=pre1, conv2=conv2, pre2=pre2, dropout=mask)


def _encode(
    model: YNet,
    image: np.ndarray,
    training: bool,
    rng: Optional[np.random.Generator],
) -> EncoderTrace:
    x = _check_image(model, image)
    trace = EncoderTrace(image=x)
    depth = model.config.depth
    for level in range(depth + 1):
        x, block = _block_forward(model, level, x, training, rng)
        trace.blocks.append(block)
        if level < depth:
            trace.skips.append(x)
            x, pool = nn.maxpool2_forward(x)
            trace.pools.append(pool)
    trace.deep = x
    if model.has_bottleneck:
        trace.z, trace.embed = nn.dense_forward(x.reshape(-1), model.layers[EMBED_LAYER])
    return trace


def _decode(model: YNet, encoder: EncoderTrace) -> DecoderTrace:
    trace = DecoderTrace()
    if model.has_bottleneck:
        pre, trace.expand = nn.dense_forward(encoder.z, model.layers[EXPAND_LAYER])
        trace.expand_pre = pre
        x = nn.relu(pre).reshape(encoder.deep.shape)
    else:
        x = encoder.deep
    for stage in range(model.config.depth):
        skip = encoder.skips[model.config.depth - 1 - stage]
        up, up_cache = nn.tconv2x2_forward(x, model.layers[f"dec.stage{stage}.up"])
        merged = nn.concat_channels(skip, up)
        pre1, conv1 = nn.conv2d_forward(merged, model.layers[f"dec.stage{stage}.conv1"])
        pre2, conv2 = nn.conv2d_forward(nn.relu(pre1), model.layers[f"dec.stage{stage}.conv2"])
        x = nn.relu(pre2)
        trace.stages.append(
            StageTrace(
                up=up_cache,
                skip_channels=skip.shape[0],
                conv1=conv1,
                pre1=pre1,
                conv2=conv2,
                pre2=pre2,
            )
        )
    logits, trace.head = nn.conv2d_forward(x, model.layers[HEAD_LAYER])
    trace.probs = nn.sigmoid(logits)
    return trace


def forward_seg_traced(
    model: YNet,
    image: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, ForwardTrace]:
    """Segmentation forward pass keeping the caches for backward_seg."""
    encoder = _encode(model, image, training, rng)
    decoder = _decode(model, encoder)
    return decoder.probs, ForwardTrace(encoder=encoder, decoder=decoder)


def forward_seg(
    model: YNet,
    image: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Foreground probabilities [1, S, S], each in (0, 1).

    Preconditions: image is [in_channels, S, S]
    Postconditions: deterministic when training is false
    Raises: ShapeError
    """
    probs, _ = forward_seg_traced(model, image, training, rng)
    return probs


def forward_embed_traced(
    model: YNet,
    image: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, EncoderTrace]:
    if not model.has_bottleneck:
        raise ValidationError("the U-Net baseline has no embedding bottleneck")
    trace = _encode(model, image, training, rng)
    return trace.z, trace


def forward_embed(
    model: YNet,
    image: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Bottleneck embedding z of length k (dense(k) pre-activation).

    Raises: ShapeError, ValidationError for the U-Net baseline
    """
    z, _ = forward_embed_traced(model, image, training, rng)
    return z


def _put(grads: Gradients, name: str, grad_w: np.ndarray, grad_b: np.ndarray) -> None:
    grads[f"{name}.weight"] = grad_w
    grads[f"{name}.bias"] = grad_b


def _conv_relu_backward(
    grads: Gradients,
    model: YNet,
    name: str,
    grad: np.ndarray,
    pre: np.ndarray,
    cache: nn.ConvCache,
) -> np.ndarray:
    grad_x, grad_w, grad_b = nn.conv2d_backward(nn.relu_backward(grad, pre), cache, model.layers[name])
    _put(grads, name, grad_w, grad_b)
    return grad_x


def _decoder_backward(
    model: YNet,
    trace: DecoderTrace,
    grad_logits: np.ndarray,
    grads: Gradients,
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Returns the gradient at the decoder input and per-level skip gradients."""
    depth = model.config.depth
    skip_grads: List[np.ndarray] = [np.zeros(0)] * depth
    grad_x, grad_w, grad_b = nn.conv2d_backward(grad_logits, trace.head, model.layers[HEAD_LAYER])
    _put(grads, HEAD_LAYER, grad_w, grad_b)
    for stage in reversed(range(depth)):
        st = trace.stages[stage]
        prefix = f"dec.stage{stage}"
        grad_x = _conv_relu_backward(grads, model, f"{prefix}.conv2", grad_x, st.pre2, st.conv2)
        grad_x = _conv_relu_backward(grads, model, f"{prefix}.conv1", grad_x, st.pre1, st.conv1)
        grad_skip, grad_up = nn.concat_backward(grad_x, st.skip_channels)
        skip_grads[depth - 1 - stage] = grad_skip
        grad_x, grad_w, grad_b = nn.tconv2x2_backward(grad_up, st.up, model.layers[f"{prefix}.up"])
        _put(grads, f"{prefix}.up", grad_w, grad_b)
    if model.has_bottleneck:
        grad_pre = nn.relu_backward(grad_x.reshape(-1), trace.expand_pre)
        grad_x, grad_w, grad_b = nn.dense_backward(grad_pre, trace.expand, model.layers[EXPAND_LAYER])
        _put(grads, EXPAND_LAYER, grad_w, grad_b)
    return grad_x, skip_grads


def _encoder_backward(
    model: YNet,
    trace: EncoderTrace,
    grad_deep: Optional[np.ndarray],
    grad_z: Optional[np.ndarray],
    skip_grads: Optional[List[np.ndarray]],
    grads: Gradients,
) -> None:
    depth = model.config.depth
    if model.has_bottleneck:
        if grad_z is None:
            grad_z = np.zeros_like(trace.z)
        grad_flat, grad_w, grad_b = nn.dense_backward(grad_z, trace.embed, model.layers[EMBED_LAYER])
        _put(grads, EMBED_LAYER, grad_w, grad_b)
        grad_x = grad_flat.reshape(trace.deep.shape)
    else:
        grad_x = grad_deep
    for level in reversed(range(depth + 1)):
        if level < depth:
            grad_x = nn.maxpool2_backward(grad_x, trace.pools[level])
            if skip_grads is not None:
                grad_x = grad_x + skip_grads[level]
        block = trace.blocks[level]
        grad_x = nn.dropout_backward(grad_x, block.dropout)
        grad_x = _conv_relu_backward(grads, model, f"enc.block{level}.conv2", grad_x, block.pre2, block.conv2)
        grad_x = _conv_relu_backward(grads, model, f"enc.block{level}.conv1", grad_x, block.pre1, block.conv1)


def backward(
    model: YNet,
    trace: Union[ForwardTrace, EncoderTrace, None],
    grad_logits: Optional[np.ndarray] = None,
    grad_z: Optional[np.ndarray] = None,
) -> Gradients:
    """Parameter gradients from upstream gradients at the logits and/or at z.

    With only grad_z (an EncoderTrace suffices) gradients reach the encoder
    and dense(k); decoder layers are absent from the result.

    Raises: ContractViolationError without a trace
    """
    if trace is None:
        raise ContractViolationError("backward called without a forward trace")
    grads: Gradients = {}
    if isinstance(trace, ForwardTrace):
        encoder, decoder = trace.encoder, trace.decoder
    else:
        encoder, decoder = trace, None
    skip_grads = None
    grad_deep = None
    if grad_logits is not None:
        if decoder is None:
            raise ContractViolationError("logit gradients need a full forward trace")
        grad_in, skip_grads = _decoder_backward(model, decoder, grad_logits, grads)
        if model.has_bottleneck:
            grad_z = grad_in if grad_z is None else grad_z + grad_in
        else:
            grad_deep = grad_in
    elif not model.has_bottleneck:
        raise ValidationError("the U-Net baseline needs logit gradients")
    _encoder_backward(model, encoder, grad_deep, grad_z, skip_grads, grads)
    return grads


def backward_seg(
    model: YNet,
    trace: Optional[ForwardTrace],
    target_mask: np.ndarray,
) -> Tuple[float, Gradients]:
    """BCE loss of a traced forward pass and its full-model gradient.

    Preconditions: trace comes from forward_seg_traced on the same model
    Postconditions: one gradient per parameter tensor, same shape
    Raises: ContractViolationError, ShapeError, ValidationError
    """
    if trace is None:
        raise ContractViolationError("backward_seg called without a forward trace")
    probs = trace.probs
    target = np.asarray(target_mask)
    if target.size != probs.size:
        raise ShapeError(f"target shape {tuple(target.shape)} does not match output shape {tuple(probs.shape)}")
    target = target.reshape(probs.shape).astype(probs.dtype)
    loss = nn.bce_loss(probs, target)
    grad_logits = nn.sigmoid_bce_backward(probs, target)
    return loss, backward(model, trace, grad_logits=grad_logits)
