"""Synthetic lesion dataset: smooth skin-like backgrounds with one perturbed
elliptical lesion per image, balanced across area bins."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..config.settings import settings
from ..shared.exceptions import DatasetIOError, GenerationError
from .codec import encode_pgm, encode_ppm
from .schemas import SPLIT_NAMES, DatasetManifest, ManifestEntry, SynthConfig
from .transforms import ResizeMode, resize

logger = logging.getLogger(__name__)

SPLIT_FRACTIONS = (0.70, 0.15)

_SKIN = np.array([0.84, 0.64, 0.54])
_LESION = np.array([0.36, 0.21, 0.15])
_HARMONICS = (2, 3, 4)
# Target areas come from the middle half of each bin, so neighbouring
# severities are separated by a gap of half a bin width.
_BIN_MARGIN = 0.25
# Lesion centres stay within this fraction of the side from the image centre.
_CENTRE_JITTER = 0.125


def severity_from_mask(mask: np.ndarray, area_bins: Sequence[Tuple[float, float]]) -> Optional[int]:
    """Index of the half-open area bin containing the mask's foreground fraction."""
    fraction = float(np.mean(mask > 0.5))
    for index, (lo, hi) in enumerate(area_bins):
        if lo <= fraction < hi:
            return index
    return None


def _texture(rng: np.random.Generator, size: int, channels: int = 3) -> np.ndarray:
    coarse = rng.normal(0.0, 1.0, size=(channels, 6, 6)).astype(np.float32)
    return resize(coarse, size, ResizeMode.BILINEAR).astype(np.float64)


def _background(rng: np.random.Generator, size: int, noise_level: float) -> np.ndarray:
    tone = _SKIN + rng.normal(0.0, 0.03, size=3)
    image = tone[:, None, None] * (1.0 + 0.06 * _texture(rng, size))
    return image + noise_level * rng.normal(0.0, 1.0, size=(3, size, size))


def _lesion_mask(rng: np.random.Generator, size: int, area_fraction: float) -> np.ndarray:
    aspect = rng.uniform(0.75, 1.33)
    theta = rng.uniform(0.0, math.pi)
    area = area_fraction * size * size
    semi_a = math.sqrt(area / math.pi * aspect)
    semi_b = math.sqrt(area / math.pi / aspect)
    amplitudes = rng.uniform(0.0, 0.06, size=len(_HARMONICS))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=len(_HARMONICS))

    reach = max(semi_a, semi_b) * (1.0 + amplitudes.sum())
    lo = max(reach, size * (0.5 - _CENTRE_JITTER))
    hi = min(size - reach, size * (0.5 + _CENTRE_JITTER))
    cx = rng.uniform(lo, hi) if lo < hi else size / 2.0
    cy = rng.uniform(lo, hi) if lo < hi else size / 2.0

    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    dx, dy = xx - cx, yy - cy
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    angle = np.arctan2(v, u)
    radius = np.sqrt((u / semi_a) ** 2 + (v / semi_b) ** 2)
    boundary = 1.0 + sum(a * np.cos(m * angle + p) for m, a, p in zip(_HARMONICS, amplitudes, phases))
    return radius <= boundary


def render_sample(
    seed: np.random.SeedSequence,
    size: int,
    area_bin: Tuple[float, float],
    noise_level: float,
    max_retries: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Render one (image [3, S, S], mask [S, S]) pair whose area lies in area_bin.

    Raises: GenerationError when max_retries draws all miss the bin
    """
    rng = np.random.default_rng(seed)
    lo, hi = area_bin
    margin = _BIN_MARGIN * (hi - lo)
    for attempt in range(max_retries):
        mask = _lesion_mask(rng, size, rng.uniform(lo + margin, hi - margin))
        fraction = float(mask.mean())
        if lo <= fraction < hi:
            break
        logger.debug("lesion area %.4f outside [%g, %g) on attempt %d", fraction, lo, hi, attempt + 1)
    else:
        raise GenerationError(f"no lesion with area in [{lo}, {hi}) after {max_retries} attempts at size {size}")

    background = _background(rng, size, noise_level)
    tone = _LESION + rng.normal(0.0, 0.03, size=3)
    lesion = tone[:, None, None] * (1.0 + 0.15 * _texture(rng, size))
    lesion = lesion + noise_level * rng.normal(0.0, 1.0, size=(3, size, size))
    image = np.where(mask[None, :, :], lesion, background)
    return np.clip(image, 0.0, 1.0).astype(np.float32), mask.astype(np.float32)


def split_indices(n: int, rng: np.random.Generator) -> dict:
    """Seeded 70/15/15 partition; each split lists ascending indices."""
    order = rng.permutation(n)
    n_train = int(round(SPLIT_FRACTIONS[0] * n))
    n_val = min(int(round(SPLIT_FRACTIONS[1] * n)), n - n_train)
    parts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    return {name: sorted(int(i) for i in part) for name, part in zip(SPLIT_NAMES, parts)}


def _write(path: Path, payload: bytes) -> None:
    try:
        path.write_bytes(payload)
    except OSError as e:
        raise DatasetIOError(f"cannot write {e.strerror or e}", str(path)) from e


def synth_generate(config: SynthConfig, out_dir: Path) -> DatasetManifest:
    """Generate config.n_samples image/mask pairs plus manifest.json under out_dir.

    Sample i belongs to severity class i mod len(area_bins), so classes are
    exactly balanced. Output is a pure function of the config.

    Raises:
        GenerationError: when a sample cannot hit its area bin
        DatasetIOError: when out_dir cannot be written
    """
    out_dir = Path(out_dir)
    try:
        (out_dir / "images").mkdir(parents=True, exist_ok=True)
        (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DatasetIOError(f"cannot create output directory ({e.strerror or e})", str(out_dir)) from e

    n_bins = len(config.area_bins)
    split_seed, *sample_seeds = np.random.SeedSequence(config.seed).spawn(config.n_samples + 1)

    def produce(index: int) -> ManifestEntry:
        severity = index % n_bins
        image, mask = render_sample(
            sample_seeds[index], config.size, config.area_bins[severity], config.noise_level, config.max_retries
        )
        name = f"sample_{index:04d}"
        entry = ManifestEntry(image=f"images/{name}.ppm", mask=f"masks/{name}.pgm", severity=severity)
        _write(out_dir / entry.image, encode_ppm(image))
        _write(out_dir / entry.mask, encode_pgm(mask))
        return entry

    logger.info("generating %d samples at %dpx into %s", config.n_samples, config.size, out_dir)
    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        entries: List[ManifestEntry] = list(pool.map(produce, range(config.n_samples)))

    manifest = DatasetManifest(
        size=config.size,
        entries=entries,
        splits=split_indices(config.n_samples, np.random.default_rng(split_seed)),
        area_bins=list(config.area_bins),
    ).bind(out_dir)
    _write(out_dir / "manifest.json", manifest.model_dump_json(indent=2, exclude_none=True).encode("utf-8"))
    logger.info("dataset splits: %s", ", ".join(f"{name}={manifest.split_size(name)}" for name in SPLIT_NAMES))
    return manifest
