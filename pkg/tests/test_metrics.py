"""Classification-report fixtures and silhouette oracle checks."""

import numpy as np
import pytest

from patchmoco.metrics import (
    classification_report,
    cluster_separation_report,
    export_features,
    load_features,
    report_to_text,
    silhouette,
    silhouette_report_to_text,
    silhouette_samples,
)


def silhouette_loop_oracle(points, cluster_ids):
    """Explicit O(N^2) reference with plain loops and no vectorization."""
    n = len(points)
    values = []
    for i in range(n):
        own = cluster_ids[i]
        same = [j for j in range(n) if cluster_ids[j] == own and j != i]
        if not same:
            values.append(0.0)
            continue
        a = sum(float(np.linalg.norm(points[i] - points[j])) for j in same) / len(same)
        b = float("inf")
        for other in set(cluster_ids) - {own}:
            members = [j for j in range(n) if cluster_ids[j] == other]
            d = sum(float(np.linalg.norm(points[i] - points[j]))
                    for j in members) / len(members)
            b = min(b, d)
        denom = max(a, b)
        values.append(0.0 if denom == 0 else (b - a) / denom)
    return sum(values) / n


class TestClassificationReport:
    def test_perfect_predictions(self):
        true = np.array([0, 1, 2, 0, 1, 2])
        report = classification_report(true, true, 3)
        assert report.acc == 1.0
        assert report.macro_recall == 1.0
        assert report.macro_precision == 1.0
        assert report.macro_f1 == 1.0
        assert np.array_equal(np.diag(report.confusion), [2, 2, 2])

    def test_cyclic_rotation_is_all_wrong(self):
        true = np.array([0, 0, 1, 1, 2, 2])
        pred = (true + 1) % 3
        report = classification_report(true, pred, 3)
        assert report.acc == 0.0
        assert np.all(report.per_class_recall == 0.0)

    def test_hand_worked_ten_sample_fixture(self):
        """Frozen values computed by hand from the confusion matrix."""
        true = [0, 0, 0, 0, 1, 1, 1, 2, 2, 2]
        pred = [0, 0, 1, 2, 1, 1, 0, 2, 2, 1]
        report = classification_report(true, pred, 3)
        assert np.array_equal(report.confusion,
                              [[2, 1, 1], [1, 2, 0], [0, 1, 2]])
        assert report.acc == pytest.approx(0.6)
        assert report.macro_recall == pytest.approx(11 / 18)      # (1/2+2/3+2/3)/3
        assert report.macro_precision == pytest.approx(11 / 18)   # (2/3+1/2+2/3)/3
        assert report.macro_f1 == pytest.approx(38 / 63)          # (4/7+4/7+2/3)/3

    def test_balanced_fixture_acc_equals_macro_recall(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n_classes = int(rng.integers(2, 6))
            per_class = int(rng.integers(3, 10))
            true = np.repeat(np.arange(n_classes), per_class)
            pred = rng.integers(0, n_classes, size=len(true))
            report = classification_report(true, pred, n_classes)
            assert report.acc == pytest.approx(report.macro_recall, abs=1e-12)

    def test_zero_division_convention(self):
        # class 2 never appears in true nor pred -> recall/precision 0, flagged
        report = classification_report([0, 1], [1, 0], 3)
        assert report.per_class_recall[2] == 0.0
        assert report.per_class_f1[2] == 0.0
        assert 2 in report.zero_division_classes

    def test_confusion_sums_to_n(self):
        rng = np.random.default_rng(1)
        true = rng.integers(0, 4, 50)
        pred = rng.integers(0, 4, 50)
        report = classification_report(true, pred, 4)
        assert report.confusion.sum() == 50

    def test_rejects_empty_and_out_of_range(self):
        with pytest.raises(ValueError):
            classification_report([], [], 3)
        with pytest.raises(ValueError):
            classification_report([0, 5], [0, 1], 3)


class TestSilhouette:
    def test_two_tight_clusters_score_one(self):
        points = np.array([[0.0, 0.0], [0.0, 0.0], [10.0, 0.0], [10.0, 0.0]])
        ids = [0, 0, 1, 1]
        assert silhouette(points, ids) == pytest.approx(1.0)

    def test_all_coincident_scores_zero(self):
        points = np.zeros((6, 3))
        ids = [0, 0, 0, 1, 1, 1]
        assert silhouette(points, ids) == 0.0

    def test_matches_loop_oracle_on_random_instances(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(5, 101))
            d = int(rng.integers(1, 17))
            k = int(rng.integers(2, 6))
            points = rng.standard_normal((n, d))
            ids = rng.integers(0, k, size=n)
            while len(np.unique(ids)) < 2:
                ids = rng.integers(0, k, size=n)
            got = silhouette(points, ids)
            want = silhouette_loop_oracle(points, list(ids))
            assert got == pytest.approx(want, abs=1e-9)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(3)
        points = rng.standard_normal((40, 8))
        ids = rng.integers(0, 3, size=40)
        while len(np.unique(ids)) < 2:
            ids = rng.integers(0, 3, size=40)
        # random orthogonal transform via QR
        q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
        assert silhouette(points @ q, ids) == pytest.approx(
            silhouette(points, ids), abs=1e-9)

    def test_range_bounded(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            points = rng.standard_normal((30, 4))
            ids = rng.integers(0, 3, size=30)
            if len(np.unique(ids)) < 2:
                continue
            values = silhouette_samples(points, ids)
            assert np.all(values >= -1.0) and np.all(values <= 1.0)

    def test_single_cluster_rejected(self):
        with pytest.raises(ValueError):
            silhouette(np.zeros((4, 2)), [0, 0, 0, 0])

    def test_singleton_cluster_convention(self):
        points = np.array([[0.0], [1.0], [2.0]])
        values = silhouette_samples(points, [0, 1, 1])
        assert values[0] == 0.0


def _ideal_geometry(rng, n_classes=3, per=5, spread=0.01):
    """Classes far apart; the two domains coincide within each class."""
    feats, classes, domains = [], [], []
    for c in range(n_classes):
        center = np.zeros(4)
        center[c % 4] = 100.0 * (c + 1)
        for domain in (0, 1):
            pts = center + rng.normal(0, spread, size=(per, 4))
            feats.append(pts)
            classes.extend([c] * per)
            domains.extend([domain] * per)
    return np.concatenate(feats), np.array(classes), np.array(domains)


def _anti_ideal_geometry(rng, n_classes=3, per=5):
    """Domains far apart within each class."""
    feats, classes, domains = [], [], []
    for c in range(n_classes):
        base = np.zeros(4)
        base[c % 4] = 100.0 * (c + 1)
        for domain in (0, 1):
            center = base.copy()
            center[3] += 40.0 * domain
            pts = center + rng.normal(0, 0.01, size=(per, 4))
            feats.append(pts)
            classes.extend([c] * per)
            domains.extend([domain] * per)
    return np.concatenate(feats), np.array(classes), np.array(domains)


class TestSeparationReport:
    def test_ideal_geometry_signature(self):
        rng = np.random.default_rng(5)
        feats, classes, domains = _ideal_geometry(rng)
        report = cluster_separation_report(feats, classes, domains)
        assert report.class_level["target"] > 0.95
        assert report.class_level["all"] > 0.95
        assert abs(report.domain_level_all) < 0.2

    def test_anti_ideal_geometry_signature(self):
        rng = np.random.default_rng(6)
        feats, classes, domains = _anti_ideal_geometry(rng)
        report = cluster_separation_report(feats, classes, domains)
        assert report.domain_level_all > 0.95

    def test_composes_from_silhouette_oracle(self):
        rng = np.random.default_rng(7)
        feats = rng.standard_normal((30, 6))
        classes = np.repeat(np.arange(3), 10)
        domains = np.tile(np.repeat([0, 1], 5), 3)
        report = cluster_separation_report(feats, classes, domains)
        tgt = domains == 1
        assert report.class_level["target"] == pytest.approx(
            silhouette_loop_oracle(feats[tgt], list(classes[tgt])), abs=1e-9)
        assert report.class_level["all"] == pytest.approx(
            silhouette_loop_oracle(feats, list(classes)), abs=1e-9)
        per_class = []
        for c in range(3):
            m = classes == c
            value = silhouette_loop_oracle(feats[m], list(domains[m]))
            assert report.domain_level[c] == pytest.approx(value, abs=1e-9)
            per_class.append(value)
        assert report.domain_level_all == pytest.approx(
            np.mean(per_class), abs=1e-9)

    def test_class_missing_a_domain_is_undefined(self):
        rng = np.random.default_rng(8)
        feats = rng.standard_normal((15, 4))
        classes = np.repeat([0, 1, 2], 5)
        domains = np.array([0] * 5 + [0, 0, 1, 1, 1] + [0, 1, 0, 1, 0])
        report = cluster_separation_report(feats, classes, domains)
        assert report.domain_level[0] is None
        defined = [v for v in report.domain_level.values() if v is not None]
        assert report.domain_level_all == pytest.approx(np.mean(defined), abs=1e-12)

    def test_pooled_variant_weights_by_class_size(self):
        rng = np.random.default_rng(9)
        feats = rng.standard_normal((24, 4))
        classes = np.array([0] * 16 + [1] * 8)
        domains = np.array([0, 1] * 12)
        mean_report = cluster_separation_report(feats, classes, domains)
        pooled_report = cluster_separation_report(feats, classes, domains,
                                                  pooled_all=True)
        assert pooled_report.domain_level_all == pytest.approx(
            pooled_report.pooled_all)
        s0 = silhouette_samples(feats[classes == 0], domains[classes == 0])
        s1 = silhouette_samples(feats[classes == 1], domains[classes == 1])
        assert pooled_report.pooled_all == pytest.approx(
            np.concatenate([s0, s1]).mean(), abs=1e-12)
        assert mean_report.domain_level_all == pytest.approx(
            (s0.mean() + s1.mean()) / 2, abs=1e-12)


class TestFeatureExport:
    def test_round_trip_within_tolerance(self, tmp_path):
        rng = np.random.default_rng(10)
        feats = rng.standard_normal((20, 128)).astype(np.float32)
        labels = rng.integers(0, 4, 20)
        domains = rng.integers(0, 2, 20)
        path = tmp_path / "features.csv"
        export_features(feats, labels, domains, path)
        loaded, lab, dom = load_features(path)
        assert np.abs(loaded - feats).max() < 1e-7
        assert np.array_equal(lab, labels)
        assert np.array_equal(dom, domains)

    def test_column_count_is_130(self, tmp_path):
        feats = np.zeros((3, 128), dtype=np.float32)
        path = tmp_path / "features.csv"
        export_features(feats, [0, 1, 2], [0, 1, 0], path)
        header = path.read_text().splitlines()[0]
        assert len(header.split(",")) == 130

    def test_empty_export_is_header_only(self, tmp_path):
        path = tmp_path / "features.csv"
        export_features(np.zeros((0, 128)), [], [], path)
        lines = path.read_text().splitlines()
        assert len(lines) == 1


class TestTextRendering:
    def test_classification_text_contains_keys(self):
        report = classification_report([0, 1, 1], [0, 1, 0], 2)
        text = report_to_text(report, class_names=("NEG", "POS"))
        assert "acc = " in text and "macro_f1 = " in text
        assert "class.NEG" in text and "confusion =" in text

    def test_silhouette_text_contains_keys(self):
        rng = np.random.default_rng(11)
        feats, classes, domains = _ideal_geometry(rng)
        report = cluster_separation_report(feats, classes, domains)
        text = silhouette_report_to_text(report)
        assert "class_level.target" in text
        assert "domain_level.all = " in text
