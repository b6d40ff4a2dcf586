"""Pydantic schemas for training configuration and persisted reports."""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field


class TrainConfig(BaseModel):
    """Schema for both training phases.

    Phase 1 uses epochs and learning_rate. Phase 2 uses cluster_epochs and
    cluster_learning_rate; k-means initialisation rescales the embedding to
    embedding_spread.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(10, ge=1)
    batch_size: int = Field(1, ge=1)
    learning_rate: float = Field(1e-4, ge=0.0)
    seed: int = Field(0, ge=0)
    p_update_interval: Optional[int] = Field(
        None, ge=1, description="Batches between target refreshes; None refreshes once per epoch"
    )
    freeze_decoder_in_phase2: bool = True
    gamma_seg: float = Field(0.0, ge=0.0, description="Weight of the segmentation loss in phase 2")
    cluster_epochs: int = Field(10, ge=1)
    cluster_learning_rate: float = Field(1e-5, ge=0.0)
    dropout_in_phase2: bool = False
    alpha: float = Field(1.0, gt=0.0, description="Student-t degrees of freedom")
    n_clusters: int = Field(4, ge=2)
    kmeans_n_init: int = Field(10, ge=1)
    embedding_spread: Optional[float] = Field(
        2.0, gt=0.0, description="RMS embedding-to-centroid distance after cluster init; None keeps raw units"
    )
    threshold: float = Field(0.5, gt=0.0, lt=1.0, description="Probability cut for predicted masks")


class EpochMetrics(BaseModel):
    """One row of loss_curve.csv."""
    epoch: int = Field(..., ge=1)
    train_loss: float
    val_loss: Optional[float] = None
    val_iou: Optional[float] = None


class KLRecord(BaseModel):
    """One target-distribution refresh: one row of kl_curve.csv."""
    refresh: int = Field(..., ge=0)
    epoch: int = Field(..., ge=0)
    batch: int = Field(..., ge=0)
    kl: float


class MetricsReport(BaseModel):
    """Schema for metrics.json.

    confusion rows are cluster labels and columns true labels; label_mapping[c]
    is the true label cluster c is matched to.
    """
    variant: str = "ynet"
    param_count: int = Field(0, ge=0)
    n_samples: int = Field(0, ge=0)
    iou_mean: Optional[float] = Field(None, ge=0.0, le=1.0)
    per_epoch_losses: List[EpochMetrics] = Field(default_factory=list)
    confusion: Optional[List[List[int]]] = None
    cluster_accuracy: Optional[float] = Field(None, ge=0.0, le=1.0)
    unmatched_accuracy: Optional[float] = Field(None, ge=0.0, le=1.0)
    label_mapping: Optional[List[int]] = None
    label_source: Optional[str] = Field(None, description="severity or kmeans")
    kl_final: Optional[float] = None


class VariantScore(BaseModel):
    """One entry of comparison.json."""
    variant: str
    param_count: int
    test_iou: float
    final_train_loss: float


class ComparisonReport(BaseModel):
    """Schema for comparison.json: Y-Net against the U-Net baseline under one budget."""
    seed: int
    epochs: int
    scores: List[VariantScore]
