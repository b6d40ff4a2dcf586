"""Binary netpbm codecs: P6 (PPM, RGB) and P5 (PGM, grey), maxval 255."""

from typing import Tuple

import numpy as np

from ..shared.exceptions import CodecError, ValidationError

_WHITESPACE = b" \t\n\r\v\f"
_DIGITS = b"0123456789"
_MAX_DIGITS = 9


def _skip_separators(data: bytes, pos: int) -> int:
    while pos < len(data):
        byte = data[pos]
        if byte in _WHITESPACE:
            pos += 1
        elif byte == ord("#"):
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    return pos


def _parse_header(data: bytes, magic: bytes) -> Tuple[int, int, int]:
    """Returns (width, height, payload offset)."""
    if data[:2] != magic:
        raise CodecError(f"expected magic {magic.decode()}", 0)
    if len(data) < 3 or data[2] not in _WHITESPACE:
        raise CodecError("expected whitespace after magic", 2)
    pos = 2
    fields = []
    for label in ("width", "height", "maxval"):
        pos = _skip_separators(data, pos)
        if pos >= len(data):
            raise CodecError(f"truncated header before {label}", pos)
        start = pos
        while pos < len(data) and data[pos] in _DIGITS:
            pos += 1
        if pos == start:
            raise CodecError(f"expected decimal {label}", start)
        if pos - start > _MAX_DIGITS:
            raise CodecError(f"{label} has too many digits", start)
        fields.append((int(data[start:pos]), start))
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise CodecError("expected one whitespace byte after maxval", pos)
    (width, width_at), (height, height_at), (maxval, maxval_at) = fields
    if width < 1:
        raise CodecError("width must be positive", width_at)
    if height < 1:
        raise CodecError("height must be positive", height_at)
    if maxval != 255:
        raise CodecError(f"unsupported maxval {maxval} (only 255)", maxval_at)
    return width, height, pos + 1


def _payload(data: bytes, magic: bytes, channels: int) -> Tuple[np.ndarray, int, int]:
    width, height, offset = _parse_header(data, magic)
    expected = width * height * channels
    available = len(data) - offset
    if available < expected:
        raise CodecError(f"truncated payload: expected {expected} bytes, found {available}", offset)
    if available > expected:
        raise CodecError(f"{available - expected} trailing bytes after payload", offset + expected)
    pixels = np.frombuffer(data, dtype=np.uint8, count=expected, offset=offset)
    return pixels, width, height


def decode_ppm(data: bytes) -> np.ndarray:
    """P6 bytes to a [3, H, W] float32 tensor in [0, 1].

    Raises: CodecError with the byte offset of the defect
    """
    pixels, width, height = _payload(bytes(data), b"P6", 3)
    rgb = pixels.reshape(height, width, 3).transpose(2, 0, 1)
    return rgb.astype(np.float32) / np.float32(255.0)


def decode_pgm(data: bytes) -> np.ndarray:
    """P5 bytes to an [H, W] float32 tensor in [0, 1]."""
    pixels, width, height = _payload(bytes(data), b"P5", 1)
    return pixels.reshape(height, width).astype(np.float32) / np.float32(255.0)


def _to_bytes(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
        raise ValidationError("pixel values must be finite and within [0, 1]")
    return np.rint(values * 255.0).astype(np.uint8)


def encode_pgm(image: np.ndarray) -> bytes:
    """[H, W] tensor in [0, 1] to P5 bytes (values x 255, rounded)."""
    if image.ndim != 2 or 0 in image.shape:
        raise ValidationError(f"PGM encoding needs a non-empty [H, W] tensor, got {tuple(image.shape)}")
    height, width = image.shape
    return b"P5\n%d %d\n255\n" % (width, height) + _to_bytes(image).tobytes()


def encode_ppm(image: np.ndarray) -> bytes:
    """[3, H, W] tensor in [0, 1] to P6 bytes."""
    if image.ndim != 3 or image.shape[0] != 3 or 0 in image.shape:
        raise ValidationError(f"PPM encoding needs a [3, H, W] tensor, got {tuple(image.shape)}")
    _, height, width = image.shape
    return b"P6\n%d %d\n255\n" % (width, height) + _to_bytes(image.transpose(1, 2, 0)).tobytes()
