"""Frozen-feature extraction and linear-probe contracts."""

import numpy as np
import pytest
import torch

from patchmoco.config import ProbeConfig
from patchmoco.data import DatasetManifest, ManifestEntry
from patchmoco.model import predict
from patchmoco.pretrain import run_pretraining
from patchmoco.probe import (
    FeatureExtractor,
    extract_features,
    load_head,
    predict_manifest,
    probe_lr_at,
    save_head,
    train_probe,
)


@pytest.fixture(scope="module")
def micro_checkpoint(tmp_path_factory):
    """A 2-epoch micro pretraining checkpoint shared by probe tests."""
    from patchmoco.data import generate_synthetic_two_domain
    from tests.conftest import micro_config
    root = tmp_path_factory.mktemp("probe_corpus")
    source, target = generate_synthetic_two_domain(
        seed=0, n_per_class=8, n_classes=2, out_dir=root, tile_size=32)
    cfg = micro_config()
    path = run_pretraining(cfg, source, tmp_path_factory.mktemp("probe_ckpt"))
    return path, source, target


class TestSchedule:
    def test_divide_by_five_reading(self):
        cfg = ProbeConfig(base_lr=30.0, decay_epoch=30, decay_factor=5.0)
        assert probe_lr_at(0, cfg) == 30.0
        assert probe_lr_at(29.9, cfg) == 30.0
        assert probe_lr_at(30, cfg) == 6.0
        assert probe_lr_at(39, cfg) == 6.0

    def test_subtract_reading_available(self):
        cfg = ProbeConfig(base_lr=30.0, subtract_decay=True)
        assert probe_lr_at(30, cfg) == 25.0


class TestExtractFeatures:
    def test_shape_labels_and_unit_norm(self, micro_checkpoint):
        path, source, _ = micro_checkpoint
        feats = extract_features(path, source)
        assert feats.features.shape == (16, 128)
        assert feats.features.dtype == np.float32
        norms = np.linalg.norm(feats.features, axis=1)
        assert np.abs(norms - 1).max() < 1e-5
        assert np.array_equal(np.sort(np.unique(feats.labels)), [0, 1])
        assert np.all(feats.domains == 0)

    def test_empty_manifest_gives_0x128(self, micro_checkpoint):
        path, _, _ = micro_checkpoint
        empty = DatasetManifest(entries=[], n_classes=2)
        feats = extract_features(path, empty)
        assert feats.features.shape == (0, 128)

    def test_deterministic_across_runs(self, micro_checkpoint):
        path, source, _ = micro_checkpoint
        a = extract_features(path, source)
        b = extract_features(path, source)
        assert np.array_equal(a.features, b.features)

    def test_missing_files_reported_not_fatal(self, micro_checkpoint):
        path, source, _ = micro_checkpoint
        entries = list(source.entries) + [ManifestEntry("/nonexistent/x.png", 0, 0)]
        manifest = DatasetManifest(entries=entries, n_classes=2)
        feats = extract_features(path, manifest)
        assert feats.features.shape == (16, 128)
        assert feats.missing == ["/nonexistent/x.png"]

    def test_batching_does_not_change_result(self, micro_checkpoint):
        path, source, _ = micro_checkpoint
        a = extract_features(path, source, batch_size=3)
        b = extract_features(path, source, batch_size=16)
        np.testing.assert_allclose(a.features, b.features, atol=1e-6)


class TestTrainProbe:
    def _separable(self, rng, n=60, dim=8):
        labels = rng.integers(0, 2, n)
        feats = rng.normal(0, 0.05, (n, dim)).astype(np.float32)
        feats[:, 0] += np.where(labels == 0, -1.0, 1.0)
        return feats, labels

    def test_reaches_full_accuracy_on_separable_toy(self, rng):
        feats, labels = self._separable(rng)
        cfg = ProbeConfig(epochs=30, batch_size=16, base_lr=1.0, decay_epoch=20)
        head = train_probe(feats, labels, cfg, n_classes=2, seed=0)
        pred, _ = predict(head, feats)
        assert np.mean(pred == labels) == 1.0

    def test_single_class_rejected(self, rng):
        feats = rng.normal(size=(10, 4)).astype(np.float32)
        with pytest.raises(ValueError, match="two classes"):
            train_probe(feats, np.zeros(10, dtype=int), ProbeConfig(),
                        n_classes=2, seed=0)

    def test_out_of_range_labels_rejected(self, rng):
        feats = rng.normal(size=(10, 4)).astype(np.float32)
        labels = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2, 7])
        with pytest.raises(ValueError, match="labels"):
            train_probe(feats, labels, ProbeConfig(), n_classes=3, seed=0)

    def test_training_is_deterministic(self, rng):
        feats, labels = self._separable(rng)
        cfg = ProbeConfig(epochs=5, batch_size=16, base_lr=1.0)
        h1 = train_probe(feats, labels, cfg, n_classes=2, seed=3)
        h2 = train_probe(feats, labels, cfg, n_classes=2, seed=3)
        assert torch.equal(h1.fc.weight, h2.fc.weight)

    def test_encoder_untouched_by_probe_training(self, micro_checkpoint, rng):
        """Frozen-feature guarantee: extractor weights bit-identical."""
        path, source, _ = micro_checkpoint
        extractor = FeatureExtractor.from_checkpoint(path)
        before = {k: v.copy() for k, v in extractor.state_arrays().items()}
        feats = extract_features(None, source, extractor=extractor)
        cfg = ProbeConfig(epochs=3, batch_size=8, base_lr=1.0)
        train_probe(feats.features, feats.labels, cfg, n_classes=2, seed=0)
        after = extractor.state_arrays()
        for key in before:
            assert np.array_equal(before[key], after[key])

    def test_predictions_invariant_to_logit_rescaling(self, rng):
        feats, labels = self._separable(rng)
        cfg = ProbeConfig(epochs=5, batch_size=16, base_lr=1.0)
        head = train_probe(feats, labels, cfg, n_classes=2, seed=0)
        pred_base, _ = predict(head, feats)
        with torch.no_grad():
            head.fc.weight.mul_(7.5)
            head.fc.bias.mul_(7.5)
        pred_scaled, _ = predict(head, feats)
        assert np.array_equal(pred_base, pred_scaled)


class TestHeadPersistence:
    def test_save_load_predict_round_trip(self, micro_checkpoint, tmp_path):
        path, source, target = micro_checkpoint
        extractor = FeatureExtractor.from_checkpoint(path)
        feats = extract_features(None, source, extractor=extractor)
        cfg = ProbeConfig(epochs=3, batch_size=8, base_lr=1.0)
        head = train_probe(feats.features, feats.labels, cfg, n_classes=2, seed=0)

        head_path = tmp_path / "probe.ckpt"
        save_head(head, extractor, head_path)
        head2, extractor2 = load_head(head_path)

        rows1, scores1, _ = predict_manifest(head, extractor, target)
        rows2, scores2, _ = predict_manifest(head2, extractor2, target)
        assert rows1 == rows2
        np.testing.assert_allclose(scores1, scores2, atol=1e-6)
        assert all(len(r) == 3 for r in rows1)
