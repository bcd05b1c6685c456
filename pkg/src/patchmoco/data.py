"""Corpus ingestion, cross-dataset class remapping and the synthetic corpus.

Real corpora are folder-of-tiles trees (one subdirectory per class).  The
two public colorectal corpora use different class vocabularies; the maps
below unify both onto seven classes, grouping stroma with muscle and debris
with mucus, and dropping the complex-stroma class that has no counterpart
in the source vocabulary.

The synthetic corpus is a desk-scale stand-in: class determines tile
geometry, domain determines a global color/contrast transform, mimicking a
stain shift between two sites.
"""

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image

from . import augment
from .config import named_seed

UNIFIED_CLASSES = ("ADI", "BACK", "DEB", "LYM", "NORM", "STR", "TUM")

# Sentinel unified index for source classes dropped from the analysis.
EXCLUDED = -1

IMAGE_EXTENSIONS = (".png", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp")


def _normalize(name: str) -> str:
    name = name.strip().lower()
    # tolerate "03_COMPLEX"-style numbered directory names
    return name.lstrip("0123456789").lstrip("_- ")


@dataclass(frozen=True)
class ClassMap:
    """Total mapping from source class names to unified class indices."""
    source_names: tuple
    unified_names: tuple
    mapping: dict                 # canonical source name -> unified index or EXCLUDED
    aliases: dict = field(default_factory=dict)   # normalized synonym -> canonical name

    def __post_init__(self):
        for name in self.source_names:
            if name not in self.mapping:
                raise ValueError(f"mapping is not total: {name!r} has no entry")

    @property
    def n_classes(self) -> int:
        return len(self.unified_names)

    def lookup(self, name: str) -> int:
        """Resolve a source class name (or known synonym) to a unified index.

        Returns EXCLUDED for dropped classes; raises KeyError for unknown names.
        """
        if name in self.mapping:
            return self.mapping[name]
        norm = _normalize(name)
        for canonical in self.mapping:
            if _normalize(canonical) == norm:
                return self.mapping[canonical]
        if norm in self.aliases:
            return self.mapping[self.aliases[norm]]
        raise KeyError(f"unknown class directory name: {name!r}")


def k19_to_unified() -> ClassMap:
    """Map the 9-class source vocabulary onto the 7 unified classes.

    Muscle joins stroma and mucus joins debris; the rest map by identity.
    """
    u = {name: i for i, name in enumerate(UNIFIED_CLASSES)}
    names = ("ADI", "BACK", "DEB", "LYM", "MUC", "MUS", "NORM", "STR", "TUM")
    mapping = {
        "ADI": u["ADI"], "BACK": u["BACK"], "DEB": u["DEB"], "LYM": u["LYM"],
        "MUC": u["DEB"], "MUS": u["STR"], "NORM": u["NORM"], "STR": u["STR"],
        "TUM": u["TUM"],
    }
    aliases = {
        "adipose": "ADI", "background": "BACK", "debris": "DEB",
        "lymphocyte": "LYM", "lymphocytes": "LYM", "mucus": "MUC",
        "muscle": "MUS", "smooth muscle": "MUS", "normal": "NORM",
        "normal colon mucosa": "NORM", "stroma": "STR",
        "cancer-associated stroma": "STR", "tumor": "TUM", "tumour": "TUM",
        "tumor epithelium": "TUM",
    }
    return ClassMap(names, UNIFIED_CLASSES, mapping, aliases)


def k16_to_unified() -> ClassMap:
    """Map the 8-class target vocabulary onto the 7 unified classes.

    Complex stroma has no counterpart in the source vocabulary and is
    excluded; mucosa maps to NORM and empty to BACK.
    """
    u = {name: i for i, name in enumerate(UNIFIED_CLASSES)}
    names = ("01_TUMOR", "02_STROMA", "03_COMPLEX", "04_LYMPHO",
             "05_DEBRIS", "06_MUCOSA", "07_ADIPOSE", "08_EMPTY")
    mapping = {
        "01_TUMOR": u["TUM"], "02_STROMA": u["STR"], "03_COMPLEX": EXCLUDED,
        "04_LYMPHO": u["LYM"], "05_DEBRIS": u["DEB"], "06_MUCOSA": u["NORM"],
        "07_ADIPOSE": u["ADI"], "08_EMPTY": u["BACK"],
    }
    aliases = {
        "tum": "01_TUMOR", "tumour": "01_TUMOR", "str": "02_STROMA",
        "comp": "03_COMPLEX", "complex stroma": "03_COMPLEX",
        "lym": "04_LYMPHO", "lymphocyte": "04_LYMPHO", "deb": "05_DEBRIS",
        "norm": "06_MUCOSA", "normal": "06_MUCOSA", "adi": "07_ADIPOSE",
        "back": "08_EMPTY", "background": "08_EMPTY",
    }
    return ClassMap(names, UNIFIED_CLASSES, mapping, aliases)


def identity_class_map(names) -> ClassMap:
    """Map each source name to its own index (sorted order)."""
    names = tuple(sorted(names))
    return ClassMap(names, names, {n: i for i, n in enumerate(names)})


class ManifestEntry(NamedTuple):
    path: str
    class_label: int
    domain_id: int


@dataclass
class ImageSample:
    """A decoded tile: float RGB in [0, 1] with class and domain labels."""
    pixels: np.ndarray
    class_label: int
    domain_id: int
    source_path: str = ""


@dataclass
class DatasetManifest:
    entries: list
    n_classes: int
    split: str = "train"
    warnings: list = field(default_factory=list)

    @property
    def counts(self) -> dict:
        out = {c: 0 for c in range(self.n_classes)}
        for entry in self.entries:
            out[entry.class_label] += 1
        return out

    def __len__(self):
        return len(self.entries)


def build_manifest(root_dir, class_map: ClassMap, domain_id: int,
                   split: str = "train") -> DatasetManifest:
    """List every non-excluded tile under a folder-of-tiles tree.

    Expects one subdirectory per source class.  Entries are ordered
    lexicographically by path, so building twice from the same tree is
    deterministic.  Unknown directory names raise; empty classes are kept
    as warnings in the manifest.
    """
    root = Path(root_dir)
    manifest = DatasetManifest(entries=[], n_classes=class_map.n_classes, split=split)
    subdirs = sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
    if not subdirs:
        manifest.warnings.append(f"no class directories found under {root}")
        return manifest
    for sub in subdirs:
        label = class_map.lookup(sub.name)   # KeyError names the directory
        files = sorted(str(p) for p in sub.iterdir()
                       if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS)
        if not files:
            manifest.warnings.append(f"class directory {sub.name!r} contains no images")
            continue
        if label == EXCLUDED:
            continue
        manifest.entries.extend(
            ManifestEntry(path, label, domain_id) for path in files)
    return manifest


def save_manifest(manifest: DatasetManifest, path) -> None:
    """Write the line-based `path<TAB>class<TAB>domain` format."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# split: {manifest.split}\n")
        fh.write(f"# classes: {manifest.n_classes}\n")
        for warning in manifest.warnings:
            fh.write(f"# warning: {warning}\n")
        for entry in manifest.entries:
            fh.write(f"{entry.path}\t{entry.class_label}\t{entry.domain_id}\n")


def load_manifest(path) -> DatasetManifest:
    split, n_classes, warnings, entries = "train", 0, [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("split:"):
                    split = body.split(":", 1)[1].strip()
                elif body.startswith("classes:"):
                    n_classes = int(body.split(":", 1)[1])
                elif body.startswith("warning:"):
                    warnings.append(body.split(":", 1)[1].strip())
                continue
            p, label, domain = line.split("\t")
            entries.append(ManifestEntry(p, int(label), int(domain)))
    if n_classes == 0:
        n_classes = max((e.class_label for e in entries), default=-1) + 1
    return DatasetManifest(entries=entries, n_classes=n_classes,
                           split=split, warnings=warnings)


def split_manifest(manifest: DatasetManifest, val_fraction: float = 0.1):
    """Deterministic train/val split keyed on a hash of each entry path.

    Only the class directory and file name enter the hash, so the split is
    stable when the same corpus is mounted under a different root.
    """
    train = DatasetManifest(entries=[], n_classes=manifest.n_classes, split="train")
    val = DatasetManifest(entries=[], n_classes=manifest.n_classes, split="val")
    threshold = int(val_fraction * 2**32)
    for entry in manifest.entries:
        key = "/".join(Path(entry.path).parts[-2:])
        digest = hashlib.blake2b(key.encode(), digest_size=4).digest()
        bucket = int.from_bytes(digest, "big")
        (val if bucket < threshold else train).entries.append(entry)
    return train, val


def load_image(path) -> np.ndarray:
    """Decode an image file to float RGB in [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def load_sample(entry: ManifestEntry) -> ImageSample:
    return ImageSample(pixels=load_image(entry.path),
                       class_label=entry.class_label,
                       domain_id=entry.domain_id,
                       source_path=entry.path)


# ---------------------------------------------------------------------------
# Synthetic two-domain corpus
# ---------------------------------------------------------------------------

# Canonical palette before the per-domain transform.
_BG_COLOR = np.array([0.86, 0.76, 0.83])
_FG_COLOR = np.array([0.42, 0.28, 0.52])


def _pattern_mask(class_idx: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Binary-ish geometry mask for one tile; class fixes kind and duty cycle."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    kind = class_idx % 4
    level = class_idx // 4
    period = size / (4.0 + 2.0 * level)
    duty = 0.30 + 0.42 * (class_idx % 4) / 4.0
    phase_x = rng.uniform(0, period)
    phase_y = rng.uniform(0, period)
    if kind == 0:       # lattice of disks
        cx = (xx + phase_x) % period - period / 2
        cy = (yy + phase_y) % period - period / 2
        radius = period * np.sqrt(duty / np.pi)
        mask = (cx**2 + cy**2) < radius**2
    elif kind == 1:     # oriented stripes
        angle = np.deg2rad(35.0 + rng.uniform(-10, 10))
        coord = xx * np.cos(angle) + yy * np.sin(angle) + phase_x
        mask = (coord % period) < duty * period
    elif kind == 2:     # checkerboard
        half = period / 2.0
        mask = (np.floor((xx + phase_x) / half) + np.floor((yy + phase_y) / half)) % 2 == 0
        mask = mask & (((xx + phase_x) % half) < 2 * duty * half)
    else:               # concentric rings around a jittered center
        cx = size / 2 + rng.uniform(-size / 8, size / 8)
        cy = size / 2 + rng.uniform(-size / 8, size / 8)
        dist = np.sqrt((xx - cx)**2 + (yy - cy)**2)
        mask = ((dist + phase_x) % period) < duty * period
    return mask.astype(np.float64)


def _domain_transform(tile: np.ndarray, domain_id: int) -> np.ndarray:
    """Global color/contrast shift standing in for a staining difference."""
    if domain_id == 0:
        return tile
    shifted = augment._adjust_hue(tile, 0.35)
    shifted = augment._adjust_saturation(shifted, 1.35)
    shifted = augment._adjust_contrast(shifted, 1.15)
    return np.clip(shifted + 0.04, 0.0, 1.0)


def render_tile(class_idx: int, domain_id: int, rng: np.random.Generator,
                size: int = 96) -> np.ndarray:
    mask = _pattern_mask(class_idx, size, rng)[..., None]
    bg = _BG_COLOR + rng.uniform(-0.03, 0.03, size=3)
    fg = _FG_COLOR + rng.uniform(-0.03, 0.03, size=3)
    tile = bg * (1 - mask) + fg * mask
    tile = tile + rng.normal(0.0, 0.02, size=tile.shape)
    tile = np.clip(tile, 0.0, 1.0)
    return _domain_transform(tile, domain_id)


def generate_synthetic_two_domain(seed: int, n_per_class: int, n_classes: int,
                                  out_dir, tile_size: int = 96):
    """Render the two-domain corpus to PNG tiles and return both manifests.

    Fully determined by the seed: every tile has its own sub-seed derived
    from (seed, domain, class, index), so regenerating yields byte-identical
    files.
    """
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    if n_per_class < 8:
        raise ValueError("need at least 8 tiles per class")
    out_dir = Path(out_dir)
    manifests = []
    for domain_id, domain_name in ((0, "source"), (1, "target")):
        manifest = DatasetManifest(entries=[], n_classes=n_classes)
        for class_idx in range(n_classes):
            class_dir = out_dir / domain_name / f"class_{class_idx}"
            class_dir.mkdir(parents=True, exist_ok=True)
            for index in range(n_per_class):
                rng = np.random.default_rng(
                    named_seed(seed, "synthetic", domain_id, class_idx, index))
                tile = render_tile(class_idx, domain_id, rng, tile_size)
                path = class_dir / f"tile_{index:04d}.png"
                Image.fromarray(
                    (tile * 255.0).round().astype(np.uint8)).save(path)
                manifest.entries.append(
                    ManifestEntry(str(path), class_idx, domain_id))
        manifests.append(manifest)
    return tuple(manifests)
