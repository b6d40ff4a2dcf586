"""Dataset loading: manifest parsing and split materialisation."""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError as SchemaError

from ..config.settings import settings
from ..shared.exceptions import ConfigurationError, DatasetIOError, ValidationError
from .codec import decode_pgm, decode_ppm
from .models import Sample
from .schemas import DatasetManifest, ManifestEntry
from .transforms import ResizeMode, resize

logger = logging.getLogger(__name__)


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as e:
        raise DatasetIOError(f"cannot read file ({e.strerror or e})", str(path)) from e


def load_manifest(path: Path) -> DatasetManifest:
    """Parse manifest.json; entry paths resolve against its directory.

    Raises:
        DatasetIOError: file missing or unreadable
        ConfigurationError: malformed document or invalid partition
    """
    path = Path(path)
    raw = _read(path)
    try:
        manifest = DatasetManifest.model_validate_json(raw)
    except SchemaError as e:
        raise ConfigurationError(f"invalid manifest {path}: {e.errors()[0]['msg']}", field="manifest") from e
    return manifest.bind(path.parent)


def load_sample(entry: ManifestEntry, root: Path, size: int) -> Sample:
    """Decode one pair, resize to size (image bilinear, mask nearest) and binarise the mask."""
    image_path = root / entry.image
    mask_path = root / entry.mask
    image = resize(decode_ppm(_read(image_path)), size, ResizeMode.BILINEAR)
    mask = resize(decode_pgm(_read(mask_path)), size, ResizeMode.NEAREST)
    return Sample(
        image=image,
        mask=(mask >= 0.5).astype(np.float32),
        severity=entry.severity,
        name=Path(entry.image).stem,
    )


def load_split(manifest: DatasetManifest, split: str, size: Optional[int] = None) -> List[Sample]:
    """Materialise every sample of one split in manifest order.

    Raises:
        ValidationError: unknown split name
        DatasetIOError: a referenced file is missing (the message names it)
        CodecError: a file does not parse
    """
    if split not in manifest.splits:
        raise ValidationError(f"unknown split {split!r}; have {sorted(manifest.splits)}")
    size = size or manifest.size
    entries = [manifest.entries[i] for i in manifest.splits[split]]
    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        samples = list(pool.map(lambda entry: load_sample(entry, manifest.root, size), entries))
    logger.debug("loaded %d %s samples at %dpx", len(samples), split, size)
    return samples
