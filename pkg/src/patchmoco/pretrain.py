"""Self-supervised training loop.

Each step follows a fixed order of effects: expand every image into its
four views, embed the query views and the momentum views, evaluate the
four-term contrastive loss, take a gradient step on the query parameters
only, EMA-update the momentum branch, and finally enqueue the fresh
momentum keys.  The keys of the current batch therefore act as positives
but never as their own negatives.

Every batch is reproducible from (config, manifest): the epoch order and
per-image augmentation seeds are derived from the master seed, so a resumed
run continues with exactly the batches an uninterrupted run would have seen.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .augment import make_views
from .checkpoint import (
    arrays_to_module_state,
    load_checkpoint,
    module_state_to_arrays,
    optimizer_state_to_plain,
    plain_to_optimizer_state,
    save_checkpoint,
)
from .config import (
    ExperimentConfig,
    config_from_text,
    config_to_text,
    named_seed,
)
from .data import load_image
from .loss import LossTerms, combined_loss
from .memory import new_queue
from .model import (
    ModelBundle,
    MomentumBundle,
    build_bundle,
    forward_momentum,
    forward_query,
    images_to_batch,
    init_momentum,
    momentum_update,
)

LOG_HEADER = "step\tlr\tq1k1\tq1k2\tq2k1\tq2k2\ttotal"


class DivergenceError(RuntimeError):
    """Raised when the loss stops being finite; carries the snapshot path."""

    def __init__(self, message, snapshot_path=None):
        super().__init__(message)
        self.snapshot_path = snapshot_path


@dataclass
class TrainState:
    config: ExperimentConfig
    bundle: ModelBundle
    momentum: MomentumBundle
    queue1: object
    queue2: object
    optimizer: torch.optim.Optimizer
    epoch: int = 0     # completed epochs
    step: int = 0      # completed optimizer steps
    loss_log: list = field(default_factory=list)


def init_state(config: ExperimentConfig) -> TrainState:
    torch.manual_seed(named_seed(config.seed, "init"))
    bundle = build_bundle(config.model)
    momentum = init_momentum(bundle, alpha=config.pretrain.momentum_alpha)
    queue1 = new_queue(config.pretrain.queue_capacity,
                       seed=named_seed(config.seed, "queue", 1),
                       dim=config.model.proj_dim)
    queue2 = new_queue(config.pretrain.queue_capacity,
                       seed=named_seed(config.seed, "queue", 2),
                       dim=config.model.proj_dim)
    optimizer = torch.optim.SGD(bundle.parameters(),
                                lr=config.pretrain.base_lr,
                                momentum=config.pretrain.sgd_momentum,
                                weight_decay=config.pretrain.weight_decay)
    return TrainState(config, bundle, momentum, queue1, queue2, optimizer)


def lr_at(epoch: float, config) -> float:
    """Cosine annealing from base_lr at epoch 0 to 0 at the final epoch."""
    if config.epochs <= 0:
        return config.base_lr
    return config.base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / config.epochs))


def _set_lr(optimizer, lr):
    for group in optimizer.param_groups:
        group["lr"] = lr


def pretrain_step(state: TrainState, samples, seed: int,
                  diagnostics_dir=None) -> LossTerms:
    """One optimization step over a batch of decoded samples."""
    cfg = state.config
    quads = [make_views(s.pixels if hasattr(s, "pixels") else s,
                        named_seed(seed, i), cfg.infomin, cfg.shuffle)
             for i, s in enumerate(samples)]
    mean, std = cfg.model.input_mean, cfg.model.input_std
    v1 = images_to_batch([q.v1 for q in quads], mean, std)
    v2 = images_to_batch([q.v2 for q in quads], mean, std)
    v3 = images_to_batch([q.v3 for q in quads], mean, std)
    v4 = images_to_batch([q.v4 for q in quads], mean, std)

    state.bundle.train()
    state.momentum.train()
    q1, q2 = forward_query(state.bundle, v1, v3)
    k1, k2 = forward_momentum(state.momentum, v2, v4)

    terms = combined_loss(q1, q2, k1, k2, state.queue1, state.queue2,
                          temperature=cfg.pretrain.temperature)
    total = terms.total
    if not torch.isfinite(total):
        snapshot_path = None
        if diagnostics_dir is not None:
            snapshot_path = Path(diagnostics_dir) / f"diverged_step{state.step}.ckpt"
            save_checkpoint(snapshot_path, _state_payload(state))
        raise DivergenceError(
            f"non-finite loss at step {state.step}: {terms.to_floats()}",
            snapshot_path)

    state.optimizer.zero_grad()
    total.backward()
    state.optimizer.step()
    momentum_update(state.momentum, state.bundle)
    state.queue1.enqueue(k1)
    state.queue2.enqueue(k2)
    state.step += 1
    return terms


def _state_payload(state: TrainState) -> dict:
    return {
        "kind": "pretrain-state",
        "config_text": config_to_text(state.config),
        "epoch": state.epoch,
        "step": state.step,
        "model_q": module_state_to_arrays(state.bundle),
        "model_m": module_state_to_arrays(state.momentum),
        "queue1": state.queue1.state_dict(),
        "queue2": state.queue2.state_dict(),
        "optimizer": optimizer_state_to_plain(state.optimizer),
    }


def save_train_state(state: TrainState, path) -> None:
    save_checkpoint(path, _state_payload(state))


def load_train_state(path) -> TrainState:
    payload = load_checkpoint(path)
    if payload.get("kind") != "pretrain-state":
        raise ValueError(f"{path} does not hold a pretraining state")
    config = config_from_text(payload["config_text"])
    state = init_state(config)
    arrays_to_module_state(state.bundle, payload["model_q"])
    arrays_to_module_state(state.momentum, payload["model_m"])
    state.queue1.load_state_dict(payload["queue1"])
    state.queue2.load_state_dict(payload["queue2"])
    plain_to_optimizer_state(state.optimizer, payload["optimizer"])
    state.epoch = int(payload["epoch"])
    state.step = int(payload["step"])
    return state


class _SampleCache:
    """Decoded-image cache keyed by manifest position."""

    def __init__(self, manifest):
        self.entries = manifest.entries
        self._images = {}

    def __len__(self):
        return len(self.entries)

    def pixels(self, index):
        if index not in self._images:
            self._images[index] = load_image(self.entries[index].path)
        return self._images[index]


def run_pretraining(config: ExperimentConfig, manifest, out_dir,
                    resume=None, log_fn=None) -> Path:
    """Train over the manifest and return the final checkpoint path."""
    if len(manifest) == 0:
        raise ValueError("manifest is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    state = load_train_state(resume) if resume else init_state(config)
    config = state.config
    cache = _SampleCache(manifest)
    batch_size = config.pretrain.batch_size
    log_path = out_dir / "pretrain_log.tsv"
    mode = "a" if resume else "w"

    with open(log_path, mode, encoding="utf-8") as log:
        if not resume:
            log.write(LOG_HEADER + "\n")
        for epoch in range(state.epoch, config.pretrain.epochs):
            lr = lr_at(epoch, config.pretrain)
            _set_lr(state.optimizer, lr)
            order_rng = np.random.default_rng(named_seed(config.seed, "order", epoch))
            order = order_rng.permutation(len(cache))
            n_batches = len(order) // batch_size if config.pretrain.drop_last \
                else math.ceil(len(order) / batch_size)
            for bi in range(max(n_batches, 0)):
                idx = order[bi * batch_size:(bi + 1) * batch_size]
                samples = [cache.pixels(i) for i in idx]
                seed = named_seed(config.seed, "step", epoch, bi)
                terms = pretrain_step(state, samples, seed, diagnostics_dir=out_dir)
                values = terms.to_floats()
                log.write(f"{state.step}\t{lr:.6g}\t{values['q1k1']:.6f}\t"
                          f"{values['q1k2']:.6f}\t{values['q2k1']:.6f}\t"
                          f"{values['q2k2']:.6f}\t{values['total']:.6f}\n")
                state.loss_log.append(values["total"])
                if log_fn:
                    log_fn(state.step, lr, values)
            state.epoch = epoch + 1
            interval = config.pretrain.checkpoint_interval
            if interval and state.epoch % interval == 0 \
                    and state.epoch < config.pretrain.epochs:
                save_train_state(state, out_dir / f"checkpoint_epoch{state.epoch}.ckpt")

    final_path = out_dir / "checkpoint_final.ckpt"
    save_train_state(state, final_path)
    return final_path
