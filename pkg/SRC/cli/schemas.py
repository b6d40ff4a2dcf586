"""Run configuration document: one JSON file drives every command."""

import json
from pathlib import Path
from typing import Any, Optional, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator
from pydantic import ValidationError as SchemaError

from ..data.schemas import SynthConfig
from ..shared.exceptions import ConfigurationError, DatasetIOError
from ..training.schemas import TrainConfig
from ..ynet.schemas import ModelConfig

RUN_FORMAT_VERSION = 1

SchemaT = TypeVar("SchemaT", bound=BaseModel)


class DataSource(BaseModel):
    """Exactly one of an existing manifest or a synthetic dataset request."""
    model_config = ConfigDict(extra="forbid")

    manifest_path: Optional[str] = None
    synth: Optional[SynthConfig] = None

    @model_validator(mode="after")
    def _exactly_one(self) -> "DataSource":
        if (self.manifest_path is None) == (self.synth is None):
            raise ConfigurationError("specify exactly one of manifest_path or synth", field="data")
        return self


class RunConfig(BaseModel):
    """Schema for the run document (model, training, data source, output directory)."""
    model_config = ConfigDict(extra="forbid")

    format_version: int
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    data: DataSource
    out_dir: str = "runs/default"

    _base_dir: Path = PrivateAttr(default_factory=Path)

    @field_validator("format_version")
    @classmethod
    def _check_version(cls, value: int) -> int:
        if value != RUN_FORMAT_VERSION:
            raise ConfigurationError(
                f"unsupported format_version {value}; expected {RUN_FORMAT_VERSION}", field="format_version"
            )
        return value

    def resolve(self, path: Union[str, Path]) -> Path:
        """Resolve a document path against the directory holding the document."""
        path = Path(path)
        return path if path.is_absolute() else self._base_dir / path

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.out_dir)

    @property
    def manifest_file(self) -> Path:
        """Manifest to load: the configured one, or the synthetic dataset's under out_dir."""
        if self.data.manifest_path is not None:
            return self.resolve(self.data.manifest_path)
        return self.output_dir / "dataset" / "manifest.json"


def validate_config(schema: Type[SchemaT], document: Any, prefix: str = "") -> SchemaT:
    """Validate document against schema; the first error becomes a ConfigurationError
    whose field is the dotted location, under prefix when one is given."""
    try:
        return schema.model_validate(document)
    except SchemaError as e:
        error = e.errors()[0]
        parts = ([prefix] if prefix else []) + [str(part) for part in error["loc"]]
        raise ConfigurationError(error["msg"], field=".".join(parts) or "document") from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Read and validate a run document.

    Raises:
        DatasetIOError: the document cannot be read
        ConfigurationError: invalid document; field names the offending path
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise DatasetIOError(f"cannot read config ({e.strerror or e})", str(path)) from e
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"config is not valid JSON ({e})", field="document") from e
    config = validate_config(RunConfig, document)
    config._base_dir = path.parent
    if config.data.manifest_path is not None and not config.manifest_file.is_file():
        raise ConfigurationError(f"manifest not found at {config.manifest_file}", field="data.manifest_path")
    return config
