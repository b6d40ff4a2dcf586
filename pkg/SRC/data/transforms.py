"""Resizing of images (bilinear) and masks (nearest neighbour)."""

import enum
from typing import Tuple

import numpy as np

from ..shared.exceptions import ValidationError


class ResizeMode(enum.Enum):
    BILINEAR = "bilinear"
    NEAREST = "nearest"


def _nearest_index(n_in: int, n_out: int) -> np.ndarray:
    return np.minimum(((np.arange(n_out) + 0.5) * n_in / n_out).astype(np.int64), n_in - 1)


def _linear_taps(n_in: int, n_out: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    src = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize(image: np.ndarray, size: int, mode: ResizeMode) -> np.ndarray:
    """Resize the last two axes of [H, W] or [C, H, W] to size x size.

    Pixel centres are aligned (half-pixel convention). Nearest keeps the
    value alphabet; bilinear output stays within the input's [min, max].

    Raises: ValidationError for size < 1 or an empty image
    """
    if size < 1:
        raise ValidationError(f"target size must be >= 1, got {size}")
    if image.ndim not in (2, 3) or 0 in image.shape:
        raise ValidationError(f"resize expects a non-empty [H, W] or [C, H, W] array, got {tuple(image.shape)}")
    height, width = image.shape[-2:]
    if mode is ResizeMode.NEAREST:
        rows = _nearest_index(height, size)
        cols = _nearest_index(width, size)
        return image[..., rows[:, None], cols[None, :]]

    data = image.astype(np.float64)
    y0, y1, fy = _linear_taps(height, size)
    x0, x1, fx = _linear_taps(width, size)
    top = data[..., y0, :]
    rows = top + (data[..., y1, :] - top) * fy[:, None]
    left = rows[..., x0]
    out = left + (rows[..., x1] - left) * fx
    out = np.clip(out, data.min(), data.max())
    return out.astype(image.dtype if np.issubdtype(image.dtype, np.floating) else np.float32)
