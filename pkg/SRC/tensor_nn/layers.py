"""Layer operations with paired forward and backward passes.

Feature maps are channel-first ``[C, H, W]`` arrays; dense layers take flat
vectors. Every forward returns its output together with the cache its
backward needs, so caches are owned by the caller and never shared.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..shared.exceptions import ContractViolationError, ShapeError, ValidationError
from .params import LayerKind, LayerParams

BCE_EPSILON = 1e-7

Grads = Tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass
class ConvCache:
    input: np.ndarray


@dataclass
class TConvCache:
    input: np.ndarray


@dataclass
class DenseCache:
    input: np.ndarray


@dataclass
class PoolCache:
    """Argmax slot (0..3, scan order within the 2x2 window) per output cell."""
    argmax: np.ndarray
    input_shape: Tuple[int, int, int]


@dataclass
class DropoutMask:
    rate: float
    mask: np.ndarray
    training: bool


def _require_cache(cache: Optional[object], op: str) -> None:
    if cache is None:
        raise ContractViolationError(f"{op} backward called without a forward cache")


def _require_kind(params: LayerParams, *kinds: LayerKind) -> None:
    if params.kind not in kinds:
        names = ", ".join(k.value for k in kinds)
        raise ShapeError(f"expected layer kind in {{{names}}}, got {params.kind.value}")


def _windows(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    """Zero-padded k x k windows of a [C, H, W] map, shaped [C, H', W', k, k]."""
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    return sliding_window_view(x, (k, k), axis=(1, 2))


def conv2d_forward(x: np.ndarray, params: LayerParams) -> Tuple[np.ndarray, ConvCache]:
    """Same-padded stride-1 convolution (3x3 or 1x1).

    Preconditions: x is [C, H, W] with C equal to the kernel's in_ch
    Postconditions: output is [O, H, W]
    Raises: ShapeError
    """
    _require_kind(params, LayerKind.CONV3X3, LayerKind.CONV1X1)
    w = params.weights
    if x.ndim != 3 or x.shape[0] != w.shape[1]:
        raise ShapeError(f"input shape {tuple(x.shape)} does not match kernel shape {tuple(w.shape)}")
    x = np.asarray(x, dtype=w.dtype)
    k = w.shape[-1]
    out = np.tensordot(w, _windows(x, k, k // 2), axes=([1, 2, 3], [0, 3, 4]))
    out += params.bias[:, None, None]
    return out, ConvCache(input=x)


def conv2d_direct(x: np.ndarray, params: LayerParams) -> np.ndarray:
    """Reference convolution by direct summation over kernel taps."""
    _require_kind(params, LayerKind.CONV3X3, LayerKind.CONV1X1)
    w = params.weights
    if x.ndim != 3 or x.shape[0] != w.shape[1]:
        raise ShapeError(f"input shape {tuple(x.shape)} does not match kernel shape {tuple(w.shape)}")
    k = w.shape[-1]
    pad = k // 2
    _, height, width = x.shape
    xp = np.pad(np.asarray(x, dtype=w.dtype), ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((w.shape[0], height, width), dtype=w.dtype)
    for dy in range(k):
        for dx in range(k):
            shifted = xp[:, dy:dy + height, dx:dx + width]
            out += np.tensordot(w[:, :, dy, dx], shifted, axes=([1], [0]))
    return out + params.bias[:, None, None]


def conv2d_backward(grad_out: np.ndarray, cache: Optional[ConvCache], params: LayerParams) -> Grads:
    """Gradients of conv2d_forward: (grad_input, grad_weights, grad_bias).

    Raises: ContractViolationError, ShapeError
    """
    _require_cache(cache, "conv2d")
    _require_kind(params, LayerKind.CONV3X3, LayerKind.CONV1X1)
    x = cache.input
    w = params.weights
    expected = (w.shape[0],) + x.shape[1:]
    if grad_out.shape != expected:
        raise ShapeError(f"grad_out shape {tuple(grad_out.shape)} does not match output shape {expected}")
    k = w.shape[-1]
    pad = k // 2
    grad_w = np.tensordot(grad_out, _windows(x, k, pad), axes=([1, 2], [1, 2]))
    grad_b = grad_out.sum(axis=(1, 2))
    flipped = w[:, :, ::-1, ::-1]
    grad_x = np.tensordot(flipped, _windows(grad_out, k, k - 1 - pad), axes=([0, 2, 3], [0, 3, 4]))
    return grad_x, grad_w, grad_b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Pass the gradient where x > 0; ties at zero pass nothing."""
    return grad_out * (x > 0)


def maxpool2_forward(x: np.ndarray) -> Tuple[np.ndarray, PoolCache]:
    """2x2 max pooling with stride 2; first maximum in scan order wins ties.

    Raises: ShapeError for odd H or W
    """
    if x.ndim != 3:
        raise ShapeError(f"maxpool2 expects [C, H, W], got {tuple(x.shape)}")
    channels, height, width = x.shape
    if height % 2 or width % 2:
        raise ShapeError(f"maxpool2 needs even H and W, got {tuple(x.shape)}")
    blocks = (
        x.reshape(channels, height // 2, 2, width // 2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(channels, height // 2, width // 2, 4)
    )
    argmax = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]
    return out, PoolCache(argmax=argmax, input_shape=(channels, height, width))


def maxpool2_backward(grad_out: np.ndarray, cache: Optional[PoolCache]) -> np.ndarray:
    """Route each output gradient to its recorded argmax position."""
    _require_cache(cache, "maxpool2")
    channels, height, width = cache.input_shape
    if grad_out.shape != cache.argmax.shape:
        raise ShapeError(f"grad_out shape {tuple(grad_out.shape)} does not match pooled shape {cache.argmax.shape}")
    routed = np.zeros((channels, height // 2, width // 2, 4), dtype=grad_out.dtype)
    np.put_along_axis(routed, cache.argmax[..., None], grad_out[..., None], axis=-1)
    return (
        routed.reshape(channels, height // 2, width // 2, 2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(channels, height, width)
    )


def tconv2x2_forward(x: np.ndarray, params: LayerParams) -> Tuple[np.ndarray, TConvCache]:
    """Stride-2 2x2 transposed convolution halving the channel count.

    Preconditions: x is [C, H, W], C even, kernel is [C, C/2, 2, 2]
    Postconditions: output is [C/2, 2H, 2W]
    Raises: ShapeError
    """
    _require_kind(params, LayerKind.TCONV2X2)
    w = params.weights
    if x.ndim != 3:
        raise ShapeError(f"tconv2x2 expects [C, H, W], got {tuple(x.shape)}")
    channels, height, width = x.shape
    if channels % 2:
        raise ShapeError(f"tconv2x2 needs an even channel count, got {tuple(x.shape)}")
    if w.shape[0] != channels or w.shape[1] != channels // 2:
        raise ShapeError(f"input shape {tuple(x.shape)} does not match kernel shape {tuple(w.shape)}")
    x = np.asarray(x, dtype=w.dtype)
    taps = np.tensordot(w, x, axes=([0], [0]))  # [O, 2, 2, H, W]
    out = taps.transpose(0, 3, 1, 4, 2).reshape(w.shape[1], 2 * height, 2 * width)
    out += params.bias[:, None, None]
    return out, TConvCache(input=x)


def tconv2x2_backward(grad_out: np.ndarray, cache: Optional[TConvCache], params: LayerParams) -> Grads:
    """Gradients of tconv2x2_forward: (grad_input, grad_weights, grad_bias).

    Each input pixel owns a disjoint 2x2 output block, so grad_input is a
    contraction of the weights with the four taps of that block.

    Raises: ContractViolationError, ShapeError
    """
    _require_cache(cache, "tconv2x2")
    x = cache.input
    w = params.weights
    _, height, width = x.shape
    n_out = w.shape[1]
    if grad_out.shape != (n_out, 2 * height, 2 * width):
        raise ShapeError(
            f"grad_out shape {tuple(grad_out.shape)} does not match output shape {(n_out, 2 * height, 2 * width)}"
        )
    taps = grad_out.reshape(n_out, height, 2, width, 2).transpose(0, 2, 4, 1, 3)
    grad_x = np.tensordot(w, taps, axes=([1, 2, 3], [0, 1, 2]))
    grad_w = np.tensordot(x, taps, axes=([1, 2], [3, 4]))
    grad_b = grad_out.sum(axis=(1, 2))
    return grad_x, grad_w, grad_b


def dense_forward(x: np.ndarray, params: LayerParams) -> Tuple[np.ndarray, DenseCache]:
    """out = W x + b.

    Raises: ShapeError on length mismatch
    """
    _require_kind(params, LayerKind.DENSE)
    w = params.weights
    if x.ndim != 1 or x.shape[0] != w.shape[1]:
        raise ShapeError(f"input shape {tuple(x.shape)} does not match dense weights {tuple(w.shape)}")
    x = np.asarray(x, dtype=w.dtype)
    return w @ x + params.bias, DenseCache(input=x)


def dense_backward(grad_out: np.ndarray, cache: Optional[DenseCache], params: LayerParams) -> Grads:
    """Gradients of dense_forward: (W^T g, outer(g, x), g).

    Raises: ContractViolationError, ShapeError
    """
    _require_cache(cache, "dense")
    w = params.weights
    if grad_out.shape != (w.shape[0],):
        raise ShapeError(f"grad_out shape {tuple(grad_out.shape)} does not match dense output {(w.shape[0],)}")
    return w.T @ grad_out, np.outer(grad_out, cache.input), grad_out.copy()


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stack b's channels after a's."""
    if a.ndim != 3 or b.ndim != 3 or a.shape[1:] != b.shape[1:]:
        raise ShapeError(f"cannot concatenate {tuple(a.shape)} with {tuple(b.shape)}")
    return np.concatenate([a, b], axis=0)


def concat_backward(grad_out: np.ndarray, a_channels: int) -> Tuple[np.ndarray, np.ndarray]:
    return grad_out[:a_channels], grad_out[a_channels:]


def sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


def sigmoid_backward(grad_out: np.ndarray, out: np.ndarray) -> np.ndarray:
    return grad_out * out * (1 - out)


def _check_binary_target(pred: np.ndarray, target: np.ndarray) -> None:
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {tuple(pred.shape)} does not match target shape {tuple(target.shape)}")
    if not np.all((target == 0) | (target == 1)):
        raise ValidationError("targets must be binary (0 or 1)")


def bce_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean binary cross-entropy with predictions clamped to [eps, 1 - eps].

    Raises: ShapeError, ValidationError
    """
    _check_binary_target(pred, target)
    p = np.clip(pred.astype(np.float64), BCE_EPSILON, 1.0 - BCE_EPSILON)
    t = target.astype(np.float64)
    return float(-np.mean(t * np.log(p) + (1.0 - t) * np.log1p(-p)))


def bce_backward(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """dL/dpred of bce_loss at the clamped prediction."""
    _check_binary_target(pred, target)
    p = np.clip(pred, BCE_EPSILON, 1.0 - BCE_EPSILON)
    return ((p - target) / (p * (1 - p) * pred.size)).astype(pred.dtype, copy=False)


def sigmoid_bce_backward(probs: np.ndarray, target: np.ndarray) -> np.ndarray:
    """dL/dlogits of bce_loss(sigmoid(logits)): (p - t) / N."""
    _check_binary_target(probs, target)
    return ((probs - target) / probs.size).astype(probs.dtype, copy=False)


def dropout_apply(
    x: np.ndarray,
    rate: float,
    training: bool,
    rng: Optional[np.random.Generator],
) -> Tuple[np.ndarray, DropoutMask]:
    """Inverted dropout; identity in evaluation mode.

    Raises: ValidationError if rate is outside [0, 1)
    """
    if not 0.0 <= rate < 1.0:
        raise ValidationError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, DropoutMask(rate=rate, mask=np.ones_like(x), training=training)
    if rng is None:
        raise ValidationError("training-mode dropout needs an explicit rng")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, DropoutMask(rate=rate, mask=mask, training=training)


def dropout_backward(grad_out: np.ndarray, mask: Optional[DropoutMask]) -> np.ndarray:
    _require_cache(mask, "dropout")
    return grad_out * mask.mask
