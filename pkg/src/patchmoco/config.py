"""Experiment configuration tree, presets and the keyed text config format.

All randomness in the toolkit funnels through one master seed.  Stage seeds
are derived with :func:`named_seed`, which hashes the master seed together
with a label path, so every stage (data generation, augmentation, parameter
init, queue init, batch order) gets a decorrelated but reproducible stream.
"""

import dataclasses
import hashlib
import typing
from dataclasses import dataclass, field

from .augment import InfoMinConfig, ShuffleConfig


def named_seed(master_seed: int, *labels) -> int:
    """Derive a decorrelated 63-bit sub-seed from a master seed and labels.

    The derivation is a stable hash, so it does not depend on interpreter
    state or call order.  Labels may be strings or integers.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "big") >> 1


@dataclass
class DataConfig:
    n_classes: int = 4
    n_per_class: int = 64
    tile_size: int = 96
    val_fraction: float = 0.1


@dataclass
class ModelConfig:
    encoder: str = "small"        # "small" | "resnet50"
    width: int = 16               # stem width of the small encoder
    proj_dim: int = 128
    proj_hidden: int = 0          # 0 -> same as encoder feature dim
    input_mean: tuple = (0.485, 0.456, 0.406)
    input_std: tuple = (0.229, 0.224, 0.225)


@dataclass
class PretrainConfig:
    epochs: int = 200
    batch_size: int = 256
    base_lr: float = 0.03
    sgd_momentum: float = 0.9
    weight_decay: float = 1e-4
    momentum_alpha: float = 0.9999
    temperature: float = 0.07
    queue_capacity: int = 65536
    checkpoint_interval: int = 10  # epochs between periodic checkpoints
    drop_last: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0:
            raise ValueError("epochs must be >= 0 and batch_size > 0")
        if not (0.0 <= self.momentum_alpha <= 1.0):
            raise ValueError("momentum_alpha must lie in [0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.queue_capacity <= 0:
            raise ValueError("queue_capacity must be positive")


@dataclass
class ProbeConfig:
    epochs: int = 40
    batch_size: int = 256
    base_lr: float = 30.0
    decay_epoch: int = 30
    decay_factor: float = 5.0
    subtract_decay: bool = False   # True: lr - factor instead of lr / factor
    sgd_momentum: float = 0.9
    weight_decay: float = 0.0


@dataclass
class EvalConfig:
    resize_short: int = 255  # shorter side before the center crop
    crop_size: int = 224     # encoder evaluation resolution


@dataclass
class ExperimentConfig:
    """Full configuration of a pretrain + probe + evaluate pipeline."""

    seed: int = 0
    preset: str = "full"
    data: DataConfig = field(default_factory=DataConfig)
    infomin: InfoMinConfig = field(default_factory=InfoMinConfig)
    shuffle: ShuffleConfig = field(default_factory=ShuffleConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


def full_scale(seed: int = 0) -> ExperimentConfig:
    """Settings of the published full-scale recipe (ResNet-50, K=65536)."""
    cfg = ExperimentConfig(seed=seed, preset="full")
    cfg.model.encoder = "resnet50"
    return cfg


def desk_scale(seed: int = 0) -> ExperimentConfig:
    """A commodity-CPU preset that preserves every structural invariant.

    View sizes are scaled down proportionally (96 content views; 96 -> 3x32
    grid cells sub-cropped to 24 -> 72 mosaics) and the momentum coefficient
    is lowered so the momentum branch can track the query branch within a
    few hundred optimizer steps.
    """
    cfg = ExperimentConfig(seed=seed, preset="desk")
    cfg.infomin = InfoMinConfig(view_size=96, grayscale_p=0.5)
    cfg.shuffle = ShuffleConfig(cell=32, crop=24)
    cfg.model.encoder = "small"
    cfg.model.width = 16
    cfg.pretrain = PretrainConfig(
        epochs=30,
        batch_size=32,
        base_lr=0.005,
        momentum_alpha=0.9,
        queue_capacity=512,
        checkpoint_interval=10,
    )
    cfg.probe = ProbeConfig(base_lr=1.0, batch_size=64)
    cfg.eval = EvalConfig(resize_short=109, crop_size=96)
    return cfg


PRESETS = {"full": full_scale, "desk": desk_scale}

_REQUIRED_KEYS = ("preset", "seed")


def _parse_value(text: str, target_type):
    origin = typing.get_origin(target_type)
    if origin is tuple or target_type is tuple:
        parts = [p.strip() for p in text.strip("()").split(",") if p.strip()]
        args = typing.get_args(target_type)
        elem = args[0] if args and args[0] is not Ellipsis else float
        if elem is Ellipsis:
            elem = float
        return tuple(_parse_value(p, elem) for p in parts)
    if target_type is bool:
        value = text.strip().lower()
        if value in ("true", "1", "yes"):
            return True
        if value in ("false", "0", "no"):
            return False
        raise ValueError(f"cannot parse boolean from {text!r}")
    if target_type is int:
        return int(text)
    if target_type is float:
        return float(text)
    return text.strip()


def _flatten(cfg, prefix="") -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            out.update(_flatten(value, key + "."))
        else:
            out[key] = value
    return out


def config_to_text(cfg: ExperimentConfig) -> str:
    """Serialize a config to the keyed text format, one `key = value` per line."""
    lines = []
    for key, value in _flatten(cfg).items():
        if isinstance(value, tuple):
            value = ", ".join(repr(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _apply_entries(obj, entries: dict, prefix: str = ""):
    """Apply dotted-key overrides to a config tree, one dataclass at a time.

    Updates within one dataclass are applied together, so cross-field
    validation (e.g. crop <= cell) sees consistent values; frozen
    sub-configs are rebuilt rather than mutated.
    """
    updates = {}
    hints = typing.get_type_hints(type(obj))
    for f in dataclasses.fields(obj):
        key = prefix + f.name
        current = getattr(obj, f.name)
        if dataclasses.is_dataclass(current):
            child = _apply_entries(current, entries, key + ".")
            if child is not current:
                updates[f.name] = child
        elif key in entries:
            updates[f.name] = _parse_value(entries.pop(key), hints[f.name])
    if not updates:
        return obj
    try:
        for name, value in updates.items():
            setattr(obj, name, value)
        return obj
    except dataclasses.FrozenInstanceError:
        return dataclasses.replace(obj, **updates)


def config_from_text(text: str) -> ExperimentConfig:
    """Parse the keyed text format into an :class:`ExperimentConfig`.

    The `preset` and `seed` keys are required; the named preset supplies
    defaults and every other line overrides one field.  Unknown keys raise
    ``KeyError`` naming the key, missing required keys raise ``KeyError``
    naming the key.
    """
    entries = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        entries[key.strip()] = raw.strip()

    for required in _REQUIRED_KEYS:
        if required not in entries:
            raise KeyError(f"missing config key: {required}")

    preset = entries.pop("preset")
    if preset not in PRESETS:
        raise KeyError(f"unknown preset: {preset!r} (expected one of {sorted(PRESETS)})")
    cfg = PRESETS[preset](seed=int(entries.pop("seed")))

    _apply_entries(cfg, entries)
    if entries:
        raise KeyError(f"unknown config key: {sorted(entries)[0]}")
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_text(fh.read())


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_text(cfg))
