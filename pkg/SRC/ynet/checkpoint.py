"""Checkpoint persistence: JSON manifest plus one little-endian float32 blob.

The manifest lists every tensor (name, dtype, shape, byte offset, element
count) in blob order; the blob is the tensors concatenated in that order.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as SchemaError

from ..shared.exceptions import CheckpointError, DatasetIOError
from ..tensor_nn.params import DTYPE
from .models import CENTROIDS_NAME, YNet
from .schemas import ModelConfig
from .service import build

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
_BLOB_DTYPE = np.dtype("<f4")


class TensorEntry(BaseModel):
    """Schema for one tensor's slot in the blob."""
    model_config = ConfigDict(extra="forbid")

    name: str
    dtype: Literal["f32"] = "f32"
    shape: List[int]
    offset: int = Field(..., ge=0, description="Byte offset in the blob")
    length: int = Field(..., ge=0, description="Element count")


class CheckpointMetadata(BaseModel):
    """Schema for training provenance stored with the tensors."""
    phase: str = Field("init", description="init, segmentation, clusters_init or clustering")
    epoch: int = Field(0, ge=0)
    config_hash: str = ""
    rng_state: Optional[Dict[str, Any]] = None


class CheckpointManifest(BaseModel):
    """Schema for the checkpoint manifest document."""
    model_config = ConfigDict(extra="forbid")

    version: int
    model: ModelConfig
    metadata: CheckpointMetadata
    blob: str
    blob_bytes: int = Field(..., ge=0)
    tensors: List[TensorEntry]


@dataclass
class Checkpoint:
    """Parameter snapshot with its configuration and provenance."""
    config: ModelConfig
    tensors: Dict[str, np.ndarray]
    metadata: CheckpointMetadata


def config_hash(*documents: BaseModel) -> str:
    """sha256 over the canonical JSON of the given configuration documents."""
    digest = hashlib.sha256()
    for document in documents:
        digest.update(document.model_dump_json().encode("utf-8"))
    return digest.hexdigest()


def snapshot(model: YNet, metadata: Optional[CheckpointMetadata] = None) -> Checkpoint:
    """Copy the model's tensors (float32) into a Checkpoint."""
    tensors = {name: np.array(t, dtype=DTYPE) for name, t in model.named_tensors()}
    return Checkpoint(config=model.config, tensors=tensors, metadata=metadata or CheckpointMetadata())


def restore(checkpoint: Checkpoint, dtype: type = DTYPE) -> YNet:
    """Rebuild a model from a checkpoint.

    Raises: CheckpointError if tensor names or shapes do not match the config
    """
    model = build(checkpoint.config, seed=0, dtype=dtype)
    expected = model.tensors()
    tensors = dict(checkpoint.tensors)
    centroids = tensors.pop(CENTROIDS_NAME, None)
    missing = sorted(set(expected) - set(tensors))
    unknown = sorted(set(tensors) - set(expected))
    if missing or unknown:
        raise CheckpointError(
            f"tensor names differ from the model (missing {missing}, unknown {unknown})",
            field="tensors",
        )
    for name, target in expected.items():
        source = tensors[name]
        if source.shape != target.shape:
            raise CheckpointError(
                f"checkpoint shape {tuple(source.shape)} does not match model shape {tuple(target.shape)}",
                field=name,
            )
        target[...] = source
    if centroids is not None:
        k = checkpoint.config.embed_dim
        if centroids.ndim != 2 or centroids.shape[1] != k:
            raise CheckpointError(f"centroid shape {tuple(centroids.shape)} is not [*, {k}]", field=CENTROIDS_NAME)
        model.centroids = np.array(centroids, dtype=dtype)
    return model


def _blob_path(path: Path) -> Path:
    return path.with_suffix(".bin")


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    """Write ``path`` (manifest) and its ``.bin`` sibling (blob).

    Postconditions: load_checkpoint(path) reproduces every tensor bit for bit
    Raises: DatasetIOError
    """
    path = Path(path)
    entries: List[TensorEntry] = []
    chunks: List[bytes] = []
    offset = 0
    for name, tensor in checkpoint.tensors.items():
        raw = np.ascontiguousarray(tensor, dtype=_BLOB_DTYPE).tobytes()
        entries.append(TensorEntry(name=name, shape=list(tensor.shape), offset=offset, length=int(tensor.size)))
        chunks.append(raw)
        offset += len(raw)
    blob_path = _blob_path(path)
    manifest = CheckpointManifest(
        version=FORMAT_VERSION,
        model=checkpoint.config,
        metadata=checkpoint.metadata,
        blob=blob_path.name,
        blob_bytes=offset,
        tensors=entries,
    )
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        blob_path.write_bytes(b"".join(chunks))
        path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DatasetIOError(f"cannot write checkpoint ({exc.strerror})", str(path)) from exc
    logger.info("checkpoint written to %s (%d tensors, %d bytes)", path, len(entries), offset)
    return path


def _read_manifest(path: Path) -> CheckpointManifest:
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DatasetIOError("checkpoint manifest not found", str(path)) from exc
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable manifest ({exc})", field="manifest") from exc
    if not isinstance(document, dict):
        raise CheckpointError("manifest must be a JSON object", field="manifest")
    if document.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported version {document.get('version')!r}", field="version")
    try:
        return CheckpointManifest.model_validate(document)
    except SchemaError as exc:
        error = exc.errors()[0]
        field = ".".join(str(part) for part in error["loc"])
        raise CheckpointError(error["msg"], field=field) from exc


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Read and verify a checkpoint written by save_checkpoint.

    Raises: CheckpointError (named field) on layout, length or version errors;
            DatasetIOError when a file is missing
    """
    path = Path(path)
    manifest = _read_manifest(path)
    blob_path = path.parent / manifest.blob
    try:
        blob = blob_path.read_bytes()
    except FileNotFoundError as exc:
        raise DatasetIOError("checkpoint blob not found", str(blob_path)) from exc
    if len(blob) != manifest.blob_bytes:
        raise CheckpointError(
            f"blob holds {len(blob)} bytes, manifest expects {manifest.blob_bytes}", field="blob_bytes"
        )

    tensors: Dict[str, np.ndarray] = {}
    running = 0
    for i, entry in enumerate(manifest.tensors):
        if entry.offset != running:
            raise CheckpointError(
                f"offset {entry.offset} breaks manifest order (expected {running})", field=f"tensors[{i}].offset"
            )
        if entry.length != int(np.prod(entry.shape, dtype=np.int64)):
            raise CheckpointError(
                f"length {entry.length} does not match shape {entry.shape}", field=f"tensors[{i}].length"
            )
        if entry.name in tensors:
            raise CheckpointError(f"duplicate tensor {entry.name}", field=f"tensors[{i}].name")
        nbytes = entry.length * _BLOB_DTYPE.itemsize
        if running + nbytes > len(blob):
            raise CheckpointError("tensor runs past the end of the blob", field=f"tensors[{i}]")
        values = np.frombuffer(blob, dtype=_BLOB_DTYPE, count=entry.length, offset=running)
        tensors[entry.name] = values.astype(DTYPE).reshape(entry.shape)
        running += nbytes
    if running != manifest.blob_bytes:
        raise CheckpointError(f"tensors cover {running} of {manifest.blob_bytes} bytes", field="blob_bytes")
    return Checkpoint(config=manifest.model, tensors=tensors, metadata=manifest.metadata)


def load_model(path: Union[str, Path]) -> YNet:
    """load_checkpoint followed by restore."""
    return restore(load_checkpoint(path))
