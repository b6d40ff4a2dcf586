"""Report writers: metrics.json, loss_curve.csv, kl_curve.csv and predicted-mask PGMs."""

import csv
import io
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

from pydantic import BaseModel

from ..data.codec import encode_pgm
from ..data.models import Sample
from ..shared.exceptions import DatasetIOError
from ..ynet.models import YNet
from ..ynet.service import forward_seg
from .schemas import EpochMetrics, KLRecord

logger = logging.getLogger(__name__)

LOSS_CURVE_HEADER = ["epoch", "train_loss", "val_loss", "val_iou"]
KL_CURVE_HEADER = ["refresh", "epoch", "batch", "kl"]


def _write_bytes(path: Path, payload: bytes) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as e:
        raise DatasetIOError(f"cannot write report ({e.strerror or e})", str(path)) from e
    logger.info("wrote %s", path)
    return path


def _number(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def _csv(header: List[str], rows: Iterable[List[str]]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue().encode("utf-8")


def write_json(document: BaseModel, path: Path) -> Path:
    return _write_bytes(path, (document.model_dump_json(indent=2) + "\n").encode("utf-8"))


def write_loss_curve(history: Sequence[EpochMetrics], path: Path) -> Path:
    """One row per epoch; validation columns are empty without a validation split."""
    rows = ([str(m.epoch), _number(m.train_loss), _number(m.val_loss), _number(m.val_iou)] for m in history)
    return _write_bytes(path, _csv(LOSS_CURVE_HEADER, rows))


def write_kl_curve(history: Sequence[KLRecord], path: Path) -> Path:
    """One row per target-distribution refresh."""
    rows = ([str(r.refresh), str(r.epoch), str(r.batch), _number(r.kl)] for r in history)
    return _write_bytes(path, _csv(KL_CURVE_HEADER, rows))


def write_prediction_masks(model: YNet, samples: Sequence[Sample], out_dir: Path) -> List[Path]:
    """Probability maps (x255, 8-bit PGM) named after each sample."""
    out_dir = Path(out_dir)
    paths = []
    for index, sample in enumerate(samples):
        probs = forward_seg(model, sample.image, training=False)
        name = sample.name or f"sample_{index:04d}"
        paths.append(_write_bytes(out_dir / f"{name}.pgm", encode_pgm(probs[0])))
    return paths
