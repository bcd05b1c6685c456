"""Evaluation: macro classification metrics and cluster-separation scores.

The classification report follows the macro protocol: per-class precision,
recall and F1 (0/0 resolved to 0 and flagged), unweighted class means, and
overall accuracy.  On balanced test sets overall accuracy coincides exactly
with macro recall.

Cluster separation uses silhouette scores on the embedded features, read
two ways: class-level (clusters = class labels; higher means classes
separate) and domain-level within each class (clusters = domain ids
restricted to one class; lower means the domains align, the signature of a
domain-robust representation).
"""

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class MetricsReport:
    confusion: np.ndarray                 # C x C, rows = true, cols = predicted
    acc: float
    per_class_recall: np.ndarray
    per_class_precision: np.ndarray
    per_class_f1: np.ndarray
    macro_recall: float
    macro_precision: float
    macro_f1: float
    zero_division_classes: list = field(default_factory=list)

    @property
    def n_classes(self):
        return self.confusion.shape[0]


def classification_report(true, pred, n_classes: int) -> MetricsReport:
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if true.shape != pred.shape or true.ndim != 1:
        raise ValueError("true and pred must be equal-length 1-d arrays")
    if len(true) == 0:
        raise ValueError("cannot report metrics on zero samples")
    for name, arr in (("true", true), ("pred", pred)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ValueError(f"{name} labels must lie in [0, {n_classes})")

    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (true, pred), 1)

    true_counts = confusion.sum(axis=1)
    pred_counts = confusion.sum(axis=0)
    diag = np.diag(confusion).astype(np.float64)

    zero_division = []
    recall = np.zeros(n_classes)
    precision = np.zeros(n_classes)
    f1 = np.zeros(n_classes)
    for c in range(n_classes):
        if true_counts[c] > 0:
            recall[c] = diag[c] / true_counts[c]
        else:
            zero_division.append(c)
        if pred_counts[c] > 0:
            precision[c] = diag[c] / pred_counts[c]
        elif c not in zero_division:
            zero_division.append(c)
        if precision[c] + recall[c] > 0:
            f1[c] = 2 * precision[c] * recall[c] / (precision[c] + recall[c])

    return MetricsReport(
        confusion=confusion,
        acc=float(diag.sum() / len(true)),
        per_class_recall=recall,
        per_class_precision=precision,
        per_class_f1=f1,
        macro_recall=float(recall.mean()),
        macro_precision=float(precision.mean()),
        macro_f1=float(f1.mean()),
        zero_division_classes=sorted(zero_division),
    )


def _pairwise_distances(points: np.ndarray, chunk: int = 512) -> np.ndarray:
    n = len(points)
    out = np.zeros((n, n))
    sq = (points ** 2).sum(axis=1)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        block = sq[start:stop, None] + sq[None, :] - 2.0 * (points[start:stop] @ points.T)
        out[start:stop] = np.sqrt(np.maximum(block, 0.0))
    np.fill_diagonal(out, 0.0)
    return out


def silhouette_samples(points: np.ndarray, cluster_ids) -> np.ndarray:
    """Per-point silhouette values s(i) = (b - a) / max(a, b).

    a is the mean distance to the point's own cluster (excluding itself), b
    the smallest mean distance to any other cluster.  Singleton clusters and
    0/0 cases resolve to 0.  Euclidean distance.
    """
    points = np.asarray(points, dtype=np.float64)
    cluster_ids = np.asarray(cluster_ids)
    if points.ndim != 2 or len(points) != len(cluster_ids):
        raise ValueError("points must be N x D with one cluster id per row")
    unique = np.unique(cluster_ids)
    if len(unique) < 2:
        raise ValueError("silhouette needs at least two clusters")

    dist = _pairwise_distances(points)
    masks = {c: cluster_ids == c for c in unique}
    sizes = {c: int(m.sum()) for c, m in masks.items()}
    values = np.zeros(len(points))
    for i in range(len(points)):
        own = cluster_ids[i]
        if sizes[own] == 1:
            values[i] = 0.0      # singleton convention
            continue
        a = dist[i, masks[own]].sum() / (sizes[own] - 1)
        b = min(dist[i, masks[c]].mean() for c in unique if c != own)
        denom = max(a, b)
        values[i] = 0.0 if denom == 0 else (b - a) / denom
    return values


def silhouette(points: np.ndarray, cluster_ids) -> float:
    """Mean silhouette over all points."""
    return float(silhouette_samples(points, cluster_ids).mean())


@dataclass
class SilhouetteReport:
    class_level: dict     # {"target": float, "all": float}
    domain_level: dict    # {class id: float or None}
    domain_level_all: float
    pooled_all: float
    class_names: tuple = ()


def cluster_separation_report(features, class_labels, domain_ids,
                              class_names=(), pooled_all=False) -> SilhouetteReport:
    """Class-level and within-class domain-level silhouette tables.

    Class-level scores cluster by class label, over the target-domain subset
    and over both domains pooled.  Domain-level scores cluster by domain id
    within each class; classes missing a domain are reported as undefined
    and excluded from the aggregate.  The aggregate is the unweighted mean
    of per-class scores; `pooled_all` selects the per-point pooled variant
    as the headline number instead.
    """
    features = np.asarray(features, dtype=np.float64)
    class_labels = np.asarray(class_labels)
    domain_ids = np.asarray(domain_ids)

    target = domain_ids == 1
    class_level = {
        "target": silhouette(features[target], class_labels[target]),
        "all": silhouette(features, class_labels),
    }

    domain_level = {}
    per_class_means = []
    pooled_samples = []
    for c in np.unique(class_labels):
        in_class = class_labels == c
        if len(np.unique(domain_ids[in_class])) < 2:
            domain_level[int(c)] = None
            continue
        samples = silhouette_samples(features[in_class], domain_ids[in_class])
        domain_level[int(c)] = float(samples.mean())
        per_class_means.append(samples.mean())
        pooled_samples.append(samples)

    if not per_class_means:
        raise ValueError("no class contains both domains")
    mean_of_means = float(np.mean(per_class_means))
    pooled = float(np.concatenate(pooled_samples).mean())
    return SilhouetteReport(
        class_level=class_level,
        domain_level=domain_level,
        domain_level_all=pooled if pooled_all else mean_of_means,
        pooled_all=pooled,
        class_names=tuple(class_names),
    )


def export_features(features, class_labels, domain_ids, path) -> None:
    """CSV with one column per feature dimension plus class and domain.

    Values are written at 9 significant digits, enough to round-trip
    float32 features exactly.
    """
    features = np.asarray(features)
    dim = features.shape[1] if features.ndim == 2 else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i:03d}" for i in range(dim)] + ["class", "domain"])
        for row, label, domain in zip(features, class_labels, domain_ids):
            writer.writerow([f"{v:.9g}" for v in row] + [int(label), int(domain)])


def load_features(path):
    """Read back an exported feature CSV -> (features, class_labels, domain_ids)."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = len(header) - 2
        feats, labels, domains = [], [], []
        for row in reader:
            feats.append([float(v) for v in row[:dim]])
            labels.append(int(row[dim]))
            domains.append(int(row[dim + 1]))
    features = (np.asarray(feats, dtype=np.float64) if feats
                else np.zeros((0, dim)))
    return features, np.asarray(labels, dtype=np.int64), np.asarray(domains, dtype=np.int64)


def report_to_text(report: MetricsReport, class_names=()) -> str:
    """Keyed text rendering of a classification report."""
    lines = [
        f"acc = {report.acc:.6f}",
        f"macro_recall = {report.macro_recall:.6f}",
        f"macro_precision = {report.macro_precision:.6f}",
        f"macro_f1 = {report.macro_f1:.6f}",
    ]
    for c in range(report.n_classes):
        name = class_names[c] if c < len(class_names) else f"class_{c}"
        lines.append(
            f"class.{name} = recall {report.per_class_recall[c]:.6f}, "
            f"precision {report.per_class_precision[c]:.6f}, "
            f"f1 {report.per_class_f1[c]:.6f}")
    if report.zero_division_classes:
        lines.append("zero_division_classes = "
                     + ", ".join(str(c) for c in report.zero_division_classes))
    lines.append("confusion =")
    for row in report.confusion:
        lines.append("  " + " ".join(f"{v:6d}" for v in row))
    return "\n".join(lines) + "\n"


def silhouette_report_to_text(report: SilhouetteReport) -> str:
    lines = [
        f"class_level.target = {report.class_level['target']:.6f}",
        f"class_level.all = {report.class_level['all']:.6f}",
    ]
    for c, value in sorted(report.domain_level.items()):
        name = report.class_names[c] if c < len(report.class_names) else f"class_{c}"
        rendered = "undefined" if value is None else f"{value:.6f}"
        lines.append(f"domain_level.{name} = {rendered}")
    lines.append(f"domain_level.all = {report.domain_level_all:.6f}")
    lines.append(f"domain_level.all_pooled = {report.pooled_all:.6f}")
    return "\n".join(lines) + "\n"
