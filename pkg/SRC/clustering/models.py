"""Result containers for k-means and the clustering layer."""

from dataclasses import dataclass, field
from typing import List

import numpy as np


@dataclass
class SoftAssignment:
    """Row-stochastic n x k membership probabilities (Student-t kernel)."""
    q: np.ndarray
    alpha: float = 1.0


@dataclass
class TargetDistribution:
    """Sharpened, frequency-normalized targets derived from a SoftAssignment."""
    p: np.ndarray


@dataclass
class KMeansResult:
    """Lloyd's algorithm output.

    ``labels`` are nearest-centroid assignments (lowest index on ties) and
    ``inertia`` is their summed squared distance.
    """
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    iterations: int
    inertia_history: List[float] = field(default_factory=list)
