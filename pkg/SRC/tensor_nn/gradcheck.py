"""Central finite-difference helpers for checking backward passes."""

from typing import Callable, Optional, Sequence

import numpy as np


def numerical_gradient(
    loss: Callable[[], float],
    x: np.ndarray,
    step: float = 1e-3,
    indices: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Central differences of loss() with respect to x, perturbed in place.

    Returns a flat array aligned with ``indices`` (all elements by default).
    The step actually applied is read back from x, so rounding in 32-bit
    tensors does not bias the quotient.
    """
    flat = x.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    result = np.zeros(len(indices), dtype=np.float64)
    for slot, i in enumerate(indices):
        original = flat[i]
        flat[i] = original + step
        upper = float(flat[i])
        plus = loss()
        flat[i] = original - step
        lower = float(flat[i])
        minus = loss()
        flat[i] = original
        result[slot] = (plus - minus) / (upper - lower)
    return result


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Block relative error ||a - n|| / max(||a||, ||n||)."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def sample_indices(size: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Up to count distinct flat indices, sorted."""
    return np.sort(rng.choice(size, size=min(count, size), replace=False))
