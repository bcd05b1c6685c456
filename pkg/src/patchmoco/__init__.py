"""Momentum-contrast pretraining with patch-shuffled views.

Library layout:

- :mod:`patchmoco.data` — corpora, class maps, synthetic two-domain tiles
- :mod:`patchmoco.augment` — the four-view augmentation pipeline
- :mod:`patchmoco.model` — encoder, projectors, momentum branch
- :mod:`patchmoco.memory` — fixed-capacity negative-feature queues
- :mod:`patchmoco.loss` — temperature-scaled contrastive objectives
- :mod:`patchmoco.pretrain` — the self-supervised training loop
- :mod:`patchmoco.probe` — frozen-feature linear classification
- :mod:`patchmoco.metrics` — classification and cluster-separation reports
- :mod:`patchmoco.cli` — command-line entry points
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, desk_scale, full_scale, named_seed  # noqa: F401
