"""Unit tests for the synthetic lesion dataset generator."""

import json
from collections import Counter

import numpy as np
import pytest

from SRC.data.codec import decode_pgm, decode_ppm
from SRC.data.schemas import DEFAULT_AREA_BINS, SynthConfig
from SRC.data.synth import render_sample, severity_from_mask, split_indices, synth_generate
from SRC.shared.exceptions import ConfigurationError, DatasetIOError, GenerationError


@pytest.fixture
def generated(tmp_path):
    config = SynthConfig(n_samples=8, size=64, seed=7)
    return synth_generate(config, tmp_path / "set"), tmp_path / "set"


@pytest.mark.unit
@pytest.mark.data
class TestSynthConfig:
    """Test cases for the SynthConfig schema."""

    def test_defaults(self):
        """Test default bins and image size."""
        config = SynthConfig(n_samples=4)
        assert config.size == 64
        assert config.area_bins == DEFAULT_AREA_BINS

    def test_unbalanced_count(self):
        """Test n_samples must be a multiple of the bin count (negative case)."""
        with pytest.raises(ConfigurationError) as exc:
            SynthConfig(n_samples=10)
        assert exc.value.field == "synth.n_samples"

    def test_overlapping_bins(self):
        """Test bins must ascend without overlap (negative case)."""
        with pytest.raises(ConfigurationError) as exc:
            SynthConfig(n_samples=4, area_bins=[(0.1, 0.3), (0.2, 0.4)])
        assert exc.value.field == "synth.area_bins"


@pytest.mark.unit
@pytest.mark.data
class TestRenderSample:
    """Test cases for rendering a single sample."""

    @pytest.mark.parametrize("severity", range(4))
    def test_area_inside_bin(self, severity):
        """Test the rendered mask area falls inside the requested bin."""
        lo, hi = DEFAULT_AREA_BINS[severity]
        image, mask = render_sample(np.random.SeedSequence(severity), 64, (lo, hi), 0.04, 64)
        assert lo <= mask.mean() < hi
        assert severity_from_mask(mask, DEFAULT_AREA_BINS) == severity
        assert image.shape == (3, 64, 64)
        assert image.dtype == np.float32
        assert 0.0 <= image.min() and image.max() <= 1.0

    def test_lesion_is_distinct(self):
        """Test lesion pixels are darker than the background on average."""
        image, mask = render_sample(np.random.SeedSequence(11), 64, DEFAULT_AREA_BINS[2], 0.04, 64)
        inside = image[:, mask > 0.5].mean()
        outside = image[:, mask < 0.5].mean()
        assert inside < outside - 0.2

    def test_impossible_bin(self):
        """Test a bin narrower than one pixel at this size exhausts the retries (negative case)."""
        with pytest.raises(GenerationError):
            render_sample(np.random.SeedSequence(0), 8, (0.02, 0.021), 0.04, 5)

    def test_severity_outside_all_bins(self):
        """Test an empty mask has no severity (edge case)."""
        assert severity_from_mask(np.zeros((8, 8)), DEFAULT_AREA_BINS) is None


@pytest.mark.unit
@pytest.mark.data
class TestSynthGenerate:
    """Test cases for synth_generate."""

    def test_files_and_manifest(self, generated):
        """Test every entry is written and the manifest is on disk."""
        manifest, root = generated
        assert len(manifest.entries) == 8
        assert manifest.root == root
        document = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
        assert document["version"] == 1
        assert len(document["entries"]) == 8
        for entry in manifest.entries:
            assert decode_ppm((root / entry.image).read_bytes()).shape == (3, 64, 64)
            assert decode_pgm((root / entry.mask).read_bytes()).shape == (64, 64)

    def test_labels_rederivable_from_masks(self, generated):
        """Test each written mask's area fraction lies inside its labelled bin."""
        manifest, root = generated
        for entry in manifest.entries:
            mask = decode_pgm((root / entry.mask).read_bytes())
            assert severity_from_mask(mask, DEFAULT_AREA_BINS) == entry.severity

    def test_balanced_classes(self, generated):
        """Test severity classes are exactly balanced."""
        manifest, _ = generated
        assert Counter(entry.severity for entry in manifest.entries) == {0: 2, 1: 2, 2: 2, 3: 2}

    def test_byte_identical_rerun(self, generated, tmp_path):
        """Test a second run with the same config writes identical bytes."""
        _, first = generated
        synth_generate(SynthConfig(n_samples=8, size=64, seed=7), tmp_path / "again")
        second = tmp_path / "again"
        written = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
        assert written == sorted(p.relative_to(second) for p in second.rglob("*") if p.is_file())
        for relative in written:
            assert (first / relative).read_bytes() == (second / relative).read_bytes()

    def test_seed_changes_output(self, generated, tmp_path):
        """Test a different seed yields different images."""
        manifest, first = generated
        other = synth_generate(SynthConfig(n_samples=8, size=64, seed=8), tmp_path / "other")
        entry = manifest.entries[0].image
        assert (first / entry).read_bytes() != (other.root / entry).read_bytes()

    def test_unwritable_directory(self, tmp_path):
        """Test an output path that is a regular file (negative case)."""
        blocker = tmp_path / "blocker"
        blocker.write_text("x", encoding="utf-8")
        with pytest.raises(DatasetIOError):
            synth_generate(SynthConfig(n_samples=4, size=16), blocker)


@pytest.mark.unit
@pytest.mark.data
class TestSplitIndices:
    """Test cases for the train/val/test partition."""

    def test_fractions(self):
        """Test a 20-sample partition is 14/3/3."""
        splits = split_indices(20, np.random.default_rng(0))
        assert [len(splits[name]) for name in ("train", "val", "test")] == [14, 3, 3]

    def test_partition_complete(self):
        """Test splits are disjoint, sorted and cover every index."""
        splits = split_indices(37, np.random.default_rng(5))
        combined = splits["train"] + splits["val"] + splits["test"]
        assert sorted(combined) == list(range(37))
        for indices in splits.values():
            assert indices == sorted(indices)

    def test_tiny_dataset(self):
        """Test a single sample lands in train (edge case)."""
        splits = split_indices(1, np.random.default_rng(0))
        assert splits == {"train": [0], "val": [], "test": []}
