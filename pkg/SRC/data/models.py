"""In-memory dataset records."""

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class Sample:
    """One resized image [3, S, S] with its binary mask [S, S]."""
    image: np.ndarray
    mask: np.ndarray
    severity: Optional[int] = None
    name: str = ""
