"""Unit tests for report writers."""

import json

import pytest

from SRC.data.codec import decode_pgm
from SRC.shared.exceptions import DatasetIOError
from SRC.training.reports import write_json, write_kl_curve, write_loss_curve, write_prediction_masks
from SRC.training.schemas import EpochMetrics, KLRecord, MetricsReport


@pytest.mark.unit
@pytest.mark.training
class TestReports:
    """Test cases for JSON, CSV and PGM report output."""

    def test_loss_curve_layout(self, tmp_path):
        """Test header and rows, with empty validation cells when absent."""
        history = [
            EpochMetrics(epoch=1, train_loss=0.5, val_loss=0.25, val_iou=0.75),
            EpochMetrics(epoch=2, train_loss=0.125),
        ]
        path = write_loss_curve(history, tmp_path / "loss_curve.csv")
        assert path.read_text(encoding="utf-8") == (
            "epoch,train_loss,val_loss,val_iou\n"
            "1,0.5,0.25,0.75\n"
            "2,0.125,,\n"
        )

    def test_kl_curve_layout(self, tmp_path):
        """Test one row per refresh."""
        history = [KLRecord(refresh=0, epoch=0, batch=0, kl=0.5), KLRecord(refresh=1, epoch=1, batch=4, kl=0.25)]
        path = write_kl_curve(history, tmp_path / "reports" / "kl_curve.csv")
        assert path.read_text(encoding="utf-8").splitlines() == ["refresh,epoch,batch,kl", "0,0,0,0.5", "1,1,4,0.25"]

    def test_metrics_json_fields(self, tmp_path):
        """Test metrics.json carries the report's field names."""
        report = MetricsReport(param_count=10, n_samples=3, iou_mean=0.5)
        document = json.loads(write_json(report, tmp_path / "metrics.json").read_text(encoding="utf-8"))
        assert document["iou_mean"] == 0.5
        assert document["variant"] == "ynet"
        assert {"confusion", "label_mapping", "cluster_accuracy", "per_epoch_losses"} <= set(document)

    def test_prediction_masks(self, background_stub, empty_mask_samples, tmp_path):
        """Test one S x S probability PGM per sample, named after it."""
        paths = write_prediction_masks(background_stub, empty_mask_samples, tmp_path / "predictions")
        assert [p.name for p in paths] == [f"{s.name}.pgm" for s in empty_mask_samples]
        mask = decode_pgm(paths[0].read_bytes())
        assert mask.shape == (16, 16)
        assert mask.max() == 0.0

    def test_unwritable_target(self, tmp_path):
        """Test writing beneath a regular file (negative case)."""
        blocker = tmp_path / "blocker"
        blocker.write_text("x", encoding="utf-8")
        with pytest.raises(DatasetIOError):
            write_loss_curve([EpochMetrics(epoch=1, train_loss=0.1)], blocker / "loss_curve.csv")
