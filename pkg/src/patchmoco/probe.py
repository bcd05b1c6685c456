"""Transfer stage: frozen-feature extraction and the linear probe.

The encoder and the content-view projection head are frozen after
pretraining; images are embedded deterministically (shorter-side resize,
center crop, no augmentation) into unit-norm 128-d features, and a single
linear layer is trained on those features with labeled source data.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .augment import resize_bilinear
from .checkpoint import (
    arrays_to_module_state,
    load_checkpoint,
    module_state_to_arrays,
    save_checkpoint,
)
from .config import ExperimentConfig, config_from_text, config_to_text, named_seed
from .data import load_image
from .loss import cross_entropy
from .model import ClassifierHead, build_bundle, images_to_batch, predict


@dataclass
class FeatureSet:
    features: np.ndarray          # N x proj_dim, unit-norm float32 rows
    labels: np.ndarray            # N ints
    domains: np.ndarray           # N ints
    paths: list
    missing: list = field(default_factory=list)

    def __len__(self):
        return len(self.paths)


def _eval_transform(image: np.ndarray, resize_short: int, crop_size: int) -> np.ndarray:
    h, w = image.shape[:2]
    scale = resize_short / min(h, w)
    new_h = max(crop_size, int(round(h * scale)))
    new_w = max(crop_size, int(round(w * scale)))
    resized = resize_bilinear(image, new_h, new_w)
    top = (new_h - crop_size) // 2
    left = (new_w - crop_size) // 2
    return resized[top:top + crop_size, left:left + crop_size]


class FeatureExtractor:
    """Frozen encoder + content projection head loaded from a checkpoint."""

    def __init__(self, config: ExperimentConfig, model_arrays: dict):
        self.config = config
        self.bundle = build_bundle(config.model)
        arrays_to_module_state(self.bundle, model_arrays)
        self.bundle.eval()
        for p in self.bundle.parameters():
            p.requires_grad_(False)

    @classmethod
    def from_checkpoint(cls, path):
        payload = load_checkpoint(path)
        if payload.get("kind") != "pretrain-state":
            raise ValueError(f"{path} does not hold a pretraining state")
        return cls(config_from_text(payload["config_text"]), payload["model_q"])

    def state_arrays(self) -> dict:
        return module_state_to_arrays(self.bundle)

    @torch.no_grad()
    def embed_images(self, images) -> np.ndarray:
        cfg = self.config
        prepped = [_eval_transform(im, cfg.eval.resize_short, cfg.eval.crop_size)
                   for im in images]
        batch = images_to_batch(prepped, cfg.model.input_mean, cfg.model.input_std)
        return self.bundle.embed_infomin(batch).numpy().astype(np.float32)


def extract_features(checkpoint_path, manifest, batch_size: int = 64,
                     extractor: FeatureExtractor = None) -> FeatureSet:
    """Embed every manifest entry; missing files are reported, not fatal."""
    if extractor is None:
        extractor = FeatureExtractor.from_checkpoint(checkpoint_path)
    rows, labels, domains, paths, missing = [], [], [], [], []
    pending_images, pending_meta = [], []

    def flush():
        if not pending_images:
            return
        rows.append(extractor.embed_images(pending_images))
        for label, domain, path in pending_meta:
            labels.append(label)
            domains.append(domain)
            paths.append(path)
        pending_images.clear()
        pending_meta.clear()

    for entry in manifest.entries:
        try:
            image = load_image(entry.path)
        except (FileNotFoundError, OSError):
            missing.append(entry.path)
            continue
        pending_images.append(image)
        pending_meta.append((entry.class_label, entry.domain_id, entry.path))
        if len(pending_images) >= batch_size:
            flush()
    flush()

    dim = extractor.bundle.proj_dim
    features = (np.concatenate(rows, axis=0) if rows
                else np.zeros((0, dim), dtype=np.float32))
    return FeatureSet(features=features,
                      labels=np.asarray(labels, dtype=np.int64),
                      domains=np.asarray(domains, dtype=np.int64),
                      paths=paths, missing=missing)


def probe_lr_at(epoch: float, config) -> float:
    """Step schedule: base until decay_epoch, then divided (or reduced) by 5."""
    if epoch < config.decay_epoch:
        return config.base_lr
    if config.subtract_decay:
        return config.base_lr - config.decay_factor
    return config.base_lr / config.decay_factor


def train_probe(features: np.ndarray, labels: np.ndarray, config,
                n_classes: int, seed: int = 0) -> ClassifierHead:
    """Fit the linear head on frozen features with the step-decayed schedule."""
    features = np.asarray(features, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or len(features) != len(labels):
        raise ValueError("features must be N x D with one label per row")
    present = np.unique(labels)
    if len(present) < 2:
        raise ValueError("probe training needs at least two classes present")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")

    torch.manual_seed(named_seed(seed, "probe-init"))
    head = ClassifierHead(in_dim=features.shape[1], n_classes=n_classes)
    optimizer = torch.optim.SGD(head.parameters(), lr=config.base_lr,
                                momentum=config.sgd_momentum,
                                weight_decay=config.weight_decay)
    x = torch.from_numpy(features)
    y = torch.from_numpy(labels)
    for epoch in range(config.epochs):
        lr = probe_lr_at(epoch, config)
        for group in optimizer.param_groups:
            group["lr"] = lr
        order = np.random.default_rng(
            named_seed(seed, "probe-order", epoch)).permutation(len(features))
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            optimizer.zero_grad()
            loss = cross_entropy(head(x[idx]), y[idx])
            loss.backward()
            optimizer.step()
    return head


def save_head(head: ClassifierHead, extractor: FeatureExtractor, path) -> None:
    """Persist the probe together with its frozen feature extractor."""
    save_checkpoint(path, {
        "kind": "linear-probe",
        "config_text": config_to_text(extractor.config),
        "extractor": extractor.state_arrays(),
        "head": module_state_to_arrays(head),
        "n_classes": head.n_classes,
        "in_dim": head.fc.in_features,
    })


def load_head(path):
    payload = load_checkpoint(path)
    if payload.get("kind") != "linear-probe":
        raise ValueError(f"{path} does not hold a linear probe")
    config = config_from_text(payload["config_text"])
    extractor = FeatureExtractor(config, payload["extractor"])
    head = ClassifierHead(in_dim=int(payload["in_dim"]),
                          n_classes=int(payload["n_classes"]))
    arrays_to_module_state(head, payload["head"])
    head.eval()
    return head, extractor


def predict_manifest(head: ClassifierHead, extractor: FeatureExtractor,
                     manifest, batch_size: int = 64):
    """(rows, scores, feature_set): per-entry (path, true, pred) triples."""
    feats = extract_features(None, manifest, batch_size, extractor=extractor)
    if len(feats) == 0:
        return [], np.zeros((0, head.n_classes)), feats
    labels, scores = predict(head, feats.features)
    rows = [(path, int(true), int(pred))
            for path, true, pred in zip(feats.paths, feats.labels, labels)]
    return rows, scores, feats
