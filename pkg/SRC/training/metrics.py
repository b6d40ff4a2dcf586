"""Segmentation and clustering evaluation."""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..clustering.service import hard_assign, soft_assign
from ..config.settings import settings
from ..data.models import Sample
from ..shared.exceptions import ShapeError, ValidationError
from ..ynet.models import YNet
from ..ynet.service import forward_embed, forward_seg
from .models import ClusteringEvaluation

logger = logging.getLogger(__name__)

Predictor = Callable[[np.ndarray], np.ndarray]

DEFAULT_THRESHOLD = 0.5


def iou(pred_mask: np.ndarray, true_mask: np.ndarray) -> float:
    """|A and B| / |A or B| of two binary masks; 1.0 when both are empty.

    Raises: ShapeError
    """
    if pred_mask.shape != true_mask.shape:
        raise ShapeError(f"mask shapes differ: {tuple(pred_mask.shape)} vs {tuple(true_mask.shape)}")
    a = np.asarray(pred_mask) > 0
    b = np.asarray(true_mask) > 0
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


def _as_predictor(model: Union[YNet, Predictor]) -> Predictor:
    if isinstance(model, YNet):
        return lambda image: forward_seg(model, image, training=False)
    return model


def per_sample_iou(
    model: Union[YNet, Predictor],
    samples: Sequence[Sample],
    threshold: float = DEFAULT_THRESHOLD,
) -> List[float]:
    """IoU of each sample's thresholded prediction, in sample order."""
    predict = _as_predictor(model)

    def score(sample: Sample) -> float:
        probs = np.asarray(predict(sample.image)).reshape(sample.mask.shape)
        return iou(probs >= threshold, sample.mask)

    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        return list(pool.map(score, samples))


def evaluate_iou(
    model: Union[YNet, Predictor],
    samples: Sequence[Sample],
    threshold: float = DEFAULT_THRESHOLD,
) -> float:
    """Mean per-sample IoU in evaluation mode; independent of sample order.

    Accepts a YNet or any callable mapping an image to probabilities.

    Raises: ValidationError for an empty split
    """
    if not samples:
        raise ValidationError("cannot evaluate IoU on an empty split")
    scores = per_sample_iou(model, samples, threshold)
    return math.fsum(scores) / len(scores)


def confusion_matrix(clusters: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """k x k counts, rows cluster label, columns true label."""
    clusters = np.asarray(clusters, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if clusters.shape != labels.shape or clusters.ndim != 1:
        raise ShapeError(f"cluster labels {clusters.shape} and true labels {labels.shape} must be equal-length vectors")
    for name, values in (("cluster", clusters), ("true", labels)):
        if values.size and (values.min() < 0 or values.max() >= k):
            raise ValidationError(f"{name} labels must lie in [0, {k})")
    matrix = np.zeros((k, k), dtype=np.int64)
    np.add.at(matrix, (clusters, labels), 1)
    return matrix


def match_labels(confusion: np.ndarray) -> Tuple[List[int], float]:
    """Permutation of true labels maximising the matched count, and its accuracy.

    mapping[c] is the true label for cluster c. Every permutation is tried;
    the lexicographically first maximiser wins.

    Raises: ValidationError for an empty matrix
    """
    confusion = np.asarray(confusion)
    total = int(confusion.sum())
    if total == 0:
        raise ValidationError("confusion matrix holds no samples")
    k = confusion.shape[0]
    rows = np.arange(k)
    best_perm, best_hits = None, -1
    for perm in itertools.permutations(range(k)):
        hits = int(confusion[rows, list(perm)].sum())
        if hits > best_hits:
            best_perm, best_hits = perm, hits
    return list(best_perm), best_hits / total


def embed_samples(model: YNet, samples: Sequence[Sample]) -> np.ndarray:
    """Eval-mode embeddings [n, k] in sample order."""
    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        rows = list(pool.map(lambda s: forward_embed(model, s.image, training=False), samples))
    if not rows:
        return np.zeros((0, model.config.embed_dim), dtype=np.float64)
    return np.stack(rows).astype(np.float64)


def evaluate_clustering(
    model: YNet,
    samples: Sequence[Sample],
    reference_labels: Optional[Sequence[int]] = None,
    alpha: float = 1.0,
) -> ClusteringEvaluation:
    """Confusion of hard cluster assignments against severity (or reference) labels.

    Raises: ValidationError when centroids or labels are missing
    """
    if model.centroids is None:
        raise ValidationError("model has no cluster centroids; run cluster init first")
    if not samples:
        raise ValidationError("cannot evaluate clustering on an empty split")
    if reference_labels is not None:
        labels = np.asarray(reference_labels, dtype=np.int64)
        if labels.shape != (len(samples),):
            raise ShapeError(f"got {labels.size} reference labels for {len(samples)} samples")
    else:
        missing = [s.name for s in samples if s.severity is None]
        if missing:
            raise ValidationError(f"{len(missing)} samples carry no severity label (first: {missing[0]})")
        labels = np.array([s.severity for s in samples], dtype=np.int64)

    k = len(model.centroids)
    clusters = hard_assign(soft_assign(embed_samples(model, samples), model.centroids, alpha))
    confusion = confusion_matrix(clusters, labels, k)
    mapping, accuracy = match_labels(confusion)
    unmatched = float(np.trace(confusion)) / len(samples)
    logger.info("cluster accuracy %.4f (unmatched %.4f) on %d samples", accuracy, unmatched, len(samples))
    return ClusteringEvaluation(
        confusion=confusion,
        label_mapping=mapping,
        cluster_accuracy=accuracy,
        unmatched_accuracy=unmatched,
        clusters=clusters,
        labels=labels,
    )
