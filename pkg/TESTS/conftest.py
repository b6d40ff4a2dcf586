"""Test configuration and fixtures for the Y-Net pipeline tests."""

import json
import os
from pathlib import Path
from typing import Callable, List

import numpy as np
import pytest

from SRC.data.models import Sample
from SRC.data.schemas import DEFAULT_AREA_BINS
from SRC.data.synth import render_sample
from SRC.ynet.models import HEAD_LAYER, YNet
from SRC.ynet.schemas import ModelConfig
from SRC.ynet.service import build


def pytest_collection_modifyitems(config, items):
    """Slow acceptance runs additionally need YNET_RUN_SLOW=1."""
    if os.getenv("YNET_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set YNET_RUN_SLOW=1 to run slow acceptance tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for test data."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> ModelConfig:
    """Smallest config used by the gradient checks (S=8, B=2, L=2)."""
    return ModelConfig(image_size=8, in_channels=3, base_channels=2, depth=2, embed_dim=4, dropout_rate=0.5)


@pytest.fixture
def tiny_model(tiny_config) -> YNet:
    return build(tiny_config, seed=0)


@pytest.fixture
def small_config() -> ModelConfig:
    """Config for fast training tests (S=16, B=4, L=2)."""
    return ModelConfig(image_size=16, base_channels=4, depth=2, embed_dim=4, dropout_rate=0.0)


@pytest.fixture
def make_samples() -> Callable[..., List[Sample]]:
    """Factory for in-memory synthetic lesion samples, balanced across the default bins."""

    def _make(n: int = 8, size: int = 16, seed: int = 0) -> List[Sample]:
        seeds = np.random.SeedSequence(seed).spawn(n)
        samples = []
        for i in range(n):
            severity = i % len(DEFAULT_AREA_BINS)
            image, mask = render_sample(seeds[i], size, DEFAULT_AREA_BINS[severity], 0.04, 64)
            samples.append(Sample(image=image, mask=mask, severity=severity, name=f"sample_{i:04d}"))
        return samples

    return _make


@pytest.fixture
def background_stub(small_config) -> YNet:
    """Model whose head predicts background everywhere (zero weights, bias -30)."""
    model = build(small_config, seed=0)
    head = model.layers[HEAD_LAYER]
    head.weights[...] = 0.0
    head.bias[...] = -30.0
    return model


@pytest.fixture
def empty_mask_samples(rng, small_config) -> List[Sample]:
    """Samples with random images and all-background masks."""
    size = small_config.image_size
    return [
        Sample(
            image=rng.random((3, size, size)).astype(np.float32),
            mask=np.zeros((size, size), dtype=np.float32),
            severity=i % 4,
            name=f"blank_{i:04d}",
        )
        for i in range(4)
    ]


@pytest.fixture
def write_run_config(tmp_path) -> Callable[..., Path]:
    """Write a run config JSON under tmp_path and return its path."""

    def _write(document: dict, name: str = "run.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def run_document() -> dict:
    """Small synthetic run: S=16, B=4, L=2, two epochs."""
    return {
        "format_version": 1,
        "model": {"image_size": 16, "base_channels": 4, "depth": 2, "embed_dim": 4, "dropout_rate": 0.5},
        "train": {"epochs": 2, "batch_size": 2, "learning_rate": 1e-3, "seed": 3, "cluster_epochs": 2},
        "data": {"synth": {"n_samples": 20, "size": 16, "seed": 5}},
        "out_dir": "out",
    }
