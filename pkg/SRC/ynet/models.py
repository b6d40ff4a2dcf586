"""Model containers for Y-Net and the U-Net baseline."""

from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..tensor_nn.params import LayerParams, count_params
from .schemas import ModelConfig, ModelVariant

CENTROIDS_NAME = "cluster.centroids"


@dataclass
class YNet:
    """Assembled network.

    ``layers`` is ordered as the checkpoint lays tensors out: encoder blocks,
    bottleneck (Y-Net only), decoder stages, segmentation head. The clustering
    head is the dense(k) output; its centroids are attached after k-means.
    """
    config: ModelConfig
    layers: Dict[str, LayerParams]
    centroids: Optional[np.ndarray] = None

    @property
    def has_bottleneck(self) -> bool:
        return self.config.variant is ModelVariant.YNET

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.layers.values())).weights.dtype

    def named_tensors(self) -> Iterator[Tuple[str, np.ndarray]]:
        """Every persisted tensor, weights before bias, centroids last."""
        for name, layer in self.layers.items():
            yield f"{name}.weight", layer.weights
            yield f"{name}.bias", layer.bias
        if self.centroids is not None:
            yield CENTROIDS_NAME, self.centroids

    def tensors(self) -> Dict[str, np.ndarray]:
        return dict(self.named_tensors())

    def param_count(self) -> int:
        """Autoencoder parameters (centroids excluded)."""
        return count_params(self.layers.values())


def encoder_layer_names(config: ModelConfig) -> List[str]:
    names = []
    for level in range(config.depth + 1):
        names += [f"enc.block{level}.conv1", f"enc.block{level}.conv2"]
    return names


def decoder_layer_names(config: ModelConfig) -> List[str]:
    names = []
    for stage in range(config.depth):
        names += [f"dec.stage{stage}.up", f"dec.stage{stage}.conv1", f"dec.stage{stage}.conv2"]
    return names


EMBED_LAYER = "bottleneck.embed"
EXPAND_LAYER = "bottleneck.expand"
HEAD_LAYER = "head.conv"
