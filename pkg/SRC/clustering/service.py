"""Clustering layer: soft assignment, target distribution and KL objective.

The soft assignment uses the Student-t kernel
q_ij ~ (1 + ||z_i - mu_j||^2 / alpha) ** (-(alpha + 1) / 2), rows normalized.
The target distribution squares q and divides by the soft cluster frequency
f_j = sum_i q_ij before renormalizing rows.
"""

import logging
from typing import Tuple

import numpy as np

from ..shared.exceptions import ShapeError, ValidationError
from .kmeans import squared_distances
from .models import SoftAssignment, TargetDistribution

logger = logging.getLogger(__name__)

Q_FLOOR = 1e-12


def _check_dims(z: np.ndarray, mu: np.ndarray) -> None:
    if z.ndim != 2 or mu.ndim != 2 or z.shape[1] != mu.shape[1]:
        raise ShapeError(f"embeddings {tuple(z.shape)} and centroids {tuple(mu.shape)} disagree")


def _kernel(z: np.ndarray, mu: np.ndarray, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
    d2 = squared_distances(z, mu)
    return (1.0 + d2 / alpha) ** (-(alpha + 1.0) / 2.0), d2


def soft_assign(z: np.ndarray, mu: np.ndarray, alpha: float = 1.0) -> SoftAssignment:
    """Cluster membership probabilities for embeddings z (n x d).

    Raises: ShapeError, ValidationError for alpha <= 0
    """
    if alpha <= 0:
        raise ValidationError(f"alpha must be positive, got {alpha}")
    z = np.asarray(z, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    _check_dims(z, mu)
    kernel, _ = _kernel(z, mu, alpha)
    return SoftAssignment(q=kernel / kernel.sum(axis=1, keepdims=True), alpha=alpha)


def target_distribution(assignment: SoftAssignment) -> TargetDistribution:
    """p_ij = (q_ij^2 / f_j) / sum_j' (q_ij'^2 / f_j'), f_j = sum_i q_ij."""
    q = assignment.q
    weight = q ** 2 / np.maximum(q.sum(axis=0), Q_FLOOR)
    return TargetDistribution(p=weight / weight.sum(axis=1, keepdims=True))


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """sum_ij p_ij ln(p_ij / q_ij) with 0 ln 0 = 0 and q floored at 1e-12.

    Raises: ShapeError
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"P shape {p.shape} does not match Q shape {q.shape}")
    support = p > 0
    if np.any(support & (q < Q_FLOOR)):
        logger.warning("KL divergence: q below %.0e where p > 0; flooring", Q_FLOOR)
    q_safe = np.maximum(q, Q_FLOOR)
    terms = np.zeros_like(p)
    terms[support] = p[support] * np.log(p[support] / q_safe[support])
    return float(terms.sum())


def kl_grad(
    z: np.ndarray,
    mu: np.ndarray,
    p: np.ndarray,
    alpha: float = 1.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of kl_divergence(P, soft_assign(z, mu).q) w.r.t. z and mu, P fixed.

    dL/dz_i = (alpha + 1) sum_j (p_ij - r_i q_ij) (z_i - mu_j) / (alpha + d_ij)
    with r_i the row sum of P; dL/dmu_j is the negated sum over i.
    """
    z = np.asarray(z, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    _check_dims(z, mu)
    if p.shape != (len(z), len(mu)):
        raise ShapeError(f"P shape {p.shape} does not match {(len(z), len(mu))}")
    kernel, d2 = _kernel(z, mu, alpha)
    q = kernel / kernel.sum(axis=1, keepdims=True)
    coeff = (alpha + 1.0) * (p - p.sum(axis=1, keepdims=True) * q) / (alpha + d2)
    diff = z[:, None, :] - mu[None, :, :]
    weighted = coeff[:, :, None] * diff
    return weighted.sum(axis=1), -weighted.sum(axis=0)


def hard_assign(assignment: SoftAssignment) -> np.ndarray:
    """Per-row argmax; lowest index on ties."""
    return assignment.q.argmax(axis=1)


def cluster_frequencies(assignment: SoftAssignment) -> np.ndarray:
    """Soft cluster sizes f_j = sum_i q_ij."""
    return assignment.q.sum(axis=0)


def reseed_empty_centroids(z: np.ndarray, mu: np.ndarray, assignment: SoftAssignment) -> list:
    """Move centroids whose soft frequency fell below 1e-6 * n onto the
    embedding farthest from its nearest centroid. Updates mu in place.

    Returns the re-seeded cluster indices.
    """
    z = np.asarray(z, dtype=np.float64)
    f = cluster_frequencies(assignment)
    empty = [int(j) for j in np.flatnonzero(f < 1e-6 * len(z))]
    for j in empty:
        nearest = squared_distances(z, np.asarray(mu, dtype=np.float64)).min(axis=1)
        far = int(nearest.argmax())
        logger.warning("cluster %d is empty (f=%.3g); re-seeding at embedding %d", j, f[j], far)
        mu[j] = z[far]
    return empty
