"""k-means with k-means++ seeding over embedding vectors."""

import logging
from typing import Tuple

import numpy as np

from ..shared.exceptions import ValidationError
from .models import KMeansResult

logger = logging.getLogger(__name__)


def squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """n x k matrix of squared Euclidean distances."""
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def assign(points: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid labels (lowest index on ties) and their squared distances."""
    d2 = squared_distances(points, centroids)
    labels = d2.argmin(axis=1)
    return labels, d2[np.arange(len(points)), labels]


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new centroid drawn with probability ~ D(x)^2."""
    n = len(points)
    centroids = [points[rng.integers(n)]]
    closest = squared_distances(points, np.asarray(centroids))[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # every point coincides with a chosen centroid
            index = int(rng.integers(n))
        else:
            index = int(rng.choice(n, p=closest / total))
        centroids.append(points[index])
        closest = np.minimum(closest, squared_distances(points, points[index][None, :])[:, 0])
    return np.array(centroids, dtype=np.float64)


def _reseed_empty(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray, dist: np.ndarray) -> None:
    counts = np.bincount(labels, minlength=len(centroids))
    for j in np.flatnonzero(counts == 0):
        far = int(dist.argmax())
        logger.warning("k-means cluster %d is empty; re-seeding at point %d", j, far)
        centroids[j] = points[far]
        labels[far] = j
        dist[far] = 0.0


def _lloyd(
    points: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int,
    tol: float,
) -> KMeansResult:
    centroids = kmeans_plus_plus(points, k, rng)
    history = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        labels, dist = assign(points, centroids)
        _reseed_empty(points, centroids, labels, dist)
        inertia = float(dist.sum())
        if history and inertia > history[-1] * (1 + 1e-9) + 1e-12:
            logger.warning("k-means inertia rose from %.6g to %.6g", history[-1], inertia)
        history.append(inertia)
        updated = centroids.copy()
        for j in range(k):
            members = points[labels == j]
            if len(members):
                updated[j] = members.mean(axis=0)
        shift = float(np.sqrt(((updated - centroids) ** 2).sum(axis=1)).max())
        centroids = updated
        if shift < tol:
            break
    labels, dist = assign(points, centroids)
    return KMeansResult(
        centroids=centroids,
        labels=labels,
        inertia=float(dist.sum()),
        iterations=iterations,
        inertia_history=history,
    )


def kmeans_fit(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-6,
    n_init: int = 1,
) -> KMeansResult:
    """Lloyd iterations from k-means++ seeding; best of n_init restarts.

    Preconditions: points is n x d and finite, n >= k >= 1
    Postconditions: labels are nearest-centroid, inertia matches labels
    Raises: ValidationError
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValidationError(f"points must be an n x d matrix, got shape {points.shape}")
    if k < 1 or len(points) < k:
        raise ValidationError(f"k-means needs n >= k, got n={len(points)}, k={k}")
    if not np.all(np.isfinite(points)):
        raise ValidationError("k-means points must be finite")
    if n_init < 1:
        raise ValidationError(f"n_init must be >= 1, got {n_init}")

    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_init)]
    best = _lloyd(points, k, rngs[0], max_iter, tol)
    for rng in rngs[1:]:
        result = _lloyd(points, k, rng, max_iter, tol)
        if result.inertia < best.inertia:
            best = result
    logger.info("k-means: k=%d, n=%d, inertia %.6g after %d iterations", k, len(points), best.inertia, best.iterations)
    return best
