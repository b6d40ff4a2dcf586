"""Acceptance benchmark on the n=200, S=64 synthetic set.

Runs for tens of minutes; selected with ``YNET_RUN_SLOW=1 pytest -m slow``.
"""

import statistics

import pytest

from SRC.data.schemas import SynthConfig
from SRC.data.service import load_split
from SRC.data.synth import synth_generate
from SRC.training.metrics import evaluate_clustering
from SRC.training.schemas import TrainConfig
from SRC.training.service import compare_variants, init_clusters, train_clustering, train_segmentation
from SRC.ynet.schemas import ModelConfig
from SRC.ynet.service import build

SEEDS = (1, 2, 3)
CONFIG = ModelConfig(image_size=64, base_channels=8, depth=4, embed_dim=4)


def _splits(root, seed):
    manifest = synth_generate(SynthConfig(n_samples=200, size=64, seed=seed), root)
    return [load_split(manifest, name) for name in ("train", "val", "test")]


@pytest.mark.slow
@pytest.mark.integration
class TestBenchmark:
    """Segmentation parity and clustering recovery over three seeds."""

    def test_segmentation_parity(self, tmp_path):
        """Test median Y-Net test IoU >= 0.80 and the U-Net baseline within 0.10 of it."""
        ynet, unet = [], []
        for seed in SEEDS:
            train, val, test = _splits(tmp_path / f"set{seed}", seed)
            report = compare_variants(CONFIG, train, val, test, TrainConfig(epochs=10, learning_rate=1e-3, seed=seed))
            ynet.append(report.scores[0].test_iou)
            unet.append(report.scores[1].test_iou)
        assert statistics.median(ynet) >= 0.80
        assert abs(statistics.median(unet) - statistics.median(ynet)) <= 0.10

    def test_phase1_loss_mostly_falls(self, tmp_path):
        """Test training loss falls in at least 4 of the first 5 epoch transitions."""
        train, val, _ = _splits(tmp_path / "set", 1)
        model = build(CONFIG, seed=1)
        history = train_segmentation(model, train, val, TrainConfig(epochs=6, learning_rate=1e-3, seed=1)).history
        losses = [m.train_loss for m in history]
        assert sum(b <= a for a, b in zip(losses, losses[1:])) >= 4

    def test_clustering_recovers_severity(self, tmp_path):
        """Test phase 2 reaches matched accuracy >= 0.70 with falling KL for 2 of 3 seeds."""
        passed = 0
        for seed in SEEDS:
            train, val, test = _splits(tmp_path / f"set{seed}", seed)
            cfg = TrainConfig(epochs=10, cluster_epochs=10, learning_rate=1e-3, seed=seed)
            model = build(CONFIG, seed=seed)
            train_segmentation(model, train, val, cfg)
            init_clusters(model, train, cfg)
            init_accuracy = evaluate_clustering(model, test).cluster_accuracy
            result = train_clustering(model, train, cfg)
            accuracy = evaluate_clustering(model, test).cluster_accuracy
            kl = [record.kl for record in result.kl_history]
            if accuracy >= 0.70 and kl[-1] < kl[0] and accuracy >= init_accuracy - 0.02:
                passed += 1
        assert passed >= 2
