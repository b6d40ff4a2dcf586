"""Pydantic schemas for synthetic generation and dataset manifests."""

from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from ..shared.exceptions import ConfigurationError

SPLIT_NAMES = ("train", "val", "test")

DEFAULT_AREA_BINS: List[Tuple[float, float]] = [
    (0.02, 0.06),
    (0.06, 0.12),
    (0.12, 0.22),
    (0.22, 0.40),
]


class SynthConfig(BaseModel):
    """Schema for a synthetic lesion dataset request."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_samples: int = Field(..., ge=1, description="Total samples, a multiple of the bin count")
    size: int = Field(64, ge=8, description="Square image side in pixels")
    seed: int = Field(0, ge=0)
    area_bins: List[Tuple[float, float]] = Field(
        default_factory=lambda: list(DEFAULT_AREA_BINS),
        description="Half-open [lo, hi) lesion area fractions, one per severity class",
    )
    noise_level: float = Field(0.04, ge=0.0, le=0.5, description="Std of per-pixel background noise")
    max_retries: int = Field(64, ge=1, description="Lesion draws per sample before giving up")

    @field_validator("area_bins")
    @classmethod
    def _check_bins(cls, bins: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        if len(bins) < 2:
            raise ConfigurationError("at least two area bins are required", field="synth.area_bins")
        previous_hi = 0.0
        for lo, hi in bins:
            if not 0.0 < lo < hi <= 1.0 or lo < previous_hi:
                raise ConfigurationError(
                    f"bin [{lo}, {hi}) must lie in (0, 1] and follow the previous bin",
                    field="synth.area_bins",
                )
            previous_hi = hi
        return bins

    @model_validator(mode="after")
    def _check_balance(self) -> "SynthConfig":
        if self.n_samples % len(self.area_bins):
            raise ConfigurationError(
                f"n_samples {self.n_samples} is not a multiple of {len(self.area_bins)} bins",
                field="synth.n_samples",
            )
        return self


class ManifestEntry(BaseModel):
    """Schema for one image/mask pair, paths relative to the manifest."""
    image: str
    mask: str
    severity: Optional[int] = Field(None, ge=0)


class DatasetManifest(BaseModel):
    """Schema for manifest.json: entries plus a train/val/test partition."""
    model_config = ConfigDict(extra="forbid")

    version: Literal[1] = 1
    size: int = Field(..., ge=1, description="Side S every sample is resized to")
    entries: List[ManifestEntry]
    splits: Dict[str, List[int]]
    area_bins: Optional[List[Tuple[float, float]]] = None

    _root: Path = PrivateAttr(default_factory=Path)

    @model_validator(mode="after")
    def _check_partition(self) -> "DatasetManifest":
        missing = [name for name in SPLIT_NAMES if name not in self.splits]
        if missing:
            raise ConfigurationError(f"missing splits {missing}", field="manifest.splits")
        seen = set()
        for name, indices in self.splits.items():
            for index in indices:
                if not 0 <= index < len(self.entries):
                    raise ConfigurationError(f"split {name} references unknown entry {index}", field="manifest.splits")
                if index in seen:
                    raise ConfigurationError(f"entry {index} appears in more than one split", field="manifest.splits")
                seen.add(index)
        if len(seen) != len(self.entries):
            raise ConfigurationError("splits do not cover every entry", field="manifest.splits")
        return self

    @property
    def root(self) -> Path:
        """Directory entry paths are resolved against."""
        return self._root

    def bind(self, root: Path) -> "DatasetManifest":
        self._root = Path(root)
        return self

    def split_size(self, name: str) -> int:
        return len(self.splits.get(name, []))
