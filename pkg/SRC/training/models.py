"""Result containers returned by the training and evaluation services."""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..clustering.models import KMeansResult
from ..ynet.checkpoint import Checkpoint
from .schemas import EpochMetrics, KLRecord


@dataclass
class SegmentationResult:
    """Phase-1 outcome: final and best-validation checkpoints plus the curve."""
    final: Checkpoint
    best: Checkpoint
    best_epoch: int
    history: List[EpochMetrics] = field(default_factory=list)


@dataclass
class ClusterInit:
    """k-means initialisation of the clustering layer."""
    kmeans: KMeansResult
    embeddings: np.ndarray

    @property
    def centroids(self) -> np.ndarray:
        return self.kmeans.centroids


@dataclass
class ClusteringResult:
    """Phase-2 outcome."""
    checkpoint: Checkpoint
    kl_history: List[KLRecord] = field(default_factory=list)

    @property
    def kl_final(self) -> Optional[float]:
        return self.kl_history[-1].kl if self.kl_history else None


@dataclass
class ClusteringEvaluation:
    """Confusion matrix (rows cluster, cols true label) and its best label matching."""
    confusion: np.ndarray
    label_mapping: List[int]
    cluster_accuracy: float
    unmatched_accuracy: float
    clusters: np.ndarray
    labels: np.ndarray
