import numpy as np
import pytest

from patchmoco.augment import InfoMinConfig, ShuffleConfig
from patchmoco.config import PretrainConfig, ProbeConfig, desk_scale
from patchmoco.data import generate_synthetic_two_domain


def micro_config(seed=0):
    """A seconds-scale configuration for loop-level tests."""
    cfg = desk_scale(seed=seed)
    cfg.data.n_classes = 2
    cfg.data.n_per_class = 8
    cfg.data.tile_size = 32
    cfg.infomin = InfoMinConfig(view_size=32)
    cfg.shuffle = ShuffleConfig(cell=8, crop=6)
    cfg.model.width = 4
    cfg.pretrain = PretrainConfig(
        epochs=2, batch_size=4, base_lr=0.05, momentum_alpha=0.9,
        queue_capacity=16, checkpoint_interval=0)
    cfg.probe = ProbeConfig(epochs=5, batch_size=8, base_lr=0.5, decay_epoch=3)
    cfg.eval.resize_short = 36
    cfg.eval.crop_size = 32
    return cfg


@pytest.fixture(scope="session")
def micro_corpus(tmp_path_factory):
    """Tiny two-domain synthetic corpus shared across loop-level tests."""
    root = tmp_path_factory.mktemp("micro_corpus")
    source, target = generate_synthetic_two_domain(
        seed=0, n_per_class=8, n_classes=2, out_dir=root, tile_size=32)
    return source, target


@pytest.fixture()
def micro_cfg():
    return micro_config()


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
