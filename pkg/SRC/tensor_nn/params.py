"""Layer parameter containers and their initialization."""

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..shared.exceptions import ShapeError

DTYPE = np.float32


class LayerKind(enum.Enum):
    """Kinds of parameterized layers."""
    CONV3X3 = "conv3x3"
    CONV1X1 = "conv1x1"
    TCONV2X2 = "tconv2x2"
    DENSE = "dense"


_KERNEL_SIZE = {LayerKind.CONV3X3: 3, LayerKind.CONV1X1: 1, LayerKind.TCONV2X2: 2}


@dataclass
class LayerParams:
    """Weights and bias of one layer.

    conv weights are [out_ch, in_ch, k, k]; tconv2x2 weights are
    [in_ch, out_ch, 2, 2]; dense weights are [out_units, in_units].
    """
    kind: LayerKind
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        w, b = self.weights, self.bias
        if self.kind is LayerKind.DENSE:
            if w.ndim != 2:
                raise ShapeError(f"dense weights must be 2-D, got {w.shape}")
            n_out = w.shape[0]
        else:
            k = _KERNEL_SIZE[self.kind]
            if w.ndim != 4 or w.shape[2:] != (k, k):
                raise ShapeError(f"{self.kind.value} weights must be [*, *, {k}, {k}], got {w.shape}")
            n_out = w.shape[1] if self.kind is LayerKind.TCONV2X2 else w.shape[0]
        if b.shape != (n_out,):
            raise ShapeError(f"bias shape {b.shape} does not match output count {n_out}")

    @property
    def in_size(self) -> int:
        """Input channel (or unit) count."""
        if self.kind is LayerKind.DENSE:
            return int(self.weights.shape[1])
        if self.kind is LayerKind.TCONV2X2:
            return int(self.weights.shape[0])
        return int(self.weights.shape[1])

    @property
    def out_size(self) -> int:
        """Output channel (or unit) count."""
        return int(self.bias.shape[0])

    @property
    def size(self) -> int:
        return int(self.weights.size + self.bias.size)


def _fan_in(kind: LayerKind, n_in: int) -> int:
    if kind is LayerKind.DENSE or kind is LayerKind.TCONV2X2:
        # each tconv output pixel sums exactly one tap per input channel
        return n_in
    k = _KERNEL_SIZE[kind]
    return n_in * k * k


def init_layer(
    kind: LayerKind,
    n_in: int,
    n_out: int,
    rng: np.random.Generator,
    dtype: type = DTYPE,
) -> LayerParams:
    """He-uniform weights and zero bias.

    Preconditions: n_in, n_out >= 1
    Postconditions: LayerParams with shapes for the given kind
    """
    limit = np.sqrt(6.0 / _fan_in(kind, n_in))
    if kind is LayerKind.DENSE:
        shape: tuple = (n_out, n_in)
    elif kind is LayerKind.TCONV2X2:
        shape = (n_in, n_out, 2, 2)
    else:
        k = _KERNEL_SIZE[kind]
        shape = (n_out, n_in, k, k)
    weights = rng.uniform(-limit, limit, size=shape).astype(dtype)
    bias = np.zeros((n_out,), dtype=dtype)
    return LayerParams(kind=kind, weights=weights, bias=bias)


def count_params(layers: Iterable[LayerParams]) -> int:
    """Sum of element counts of all weight and bias tensors."""
    return sum(layer.size for layer in layers)
