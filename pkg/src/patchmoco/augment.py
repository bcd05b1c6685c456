"""View generation: patch-shuffled mosaics and content-jittered crops.

Every input image is expanded into four views: two "content" views made by
a crop / flip / color-jitter / grayscale / blur pipeline, and two
patch-shuffle views made by cropping, resizing to a 3x3 grid of square
cells, sub-cropping each cell and reassembling the nine sub-crops in a
random order.  All sampling goes through an explicit numpy generator, so a
view is a pure function of (image, seed).

Images are H x W x 3 float arrays in [0, 1] throughout; per-channel
normalization happens at model input time, not here, so provenance tests
can compare raw pixel values.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

_GRAY_WEIGHTS = np.array([0.2989, 0.587, 0.114])


def _pixels(image) -> np.ndarray:
    """Accept either a raw array or a sample object carrying `.pixels`."""
    if hasattr(image, "pixels"):
        image = image.pixels
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {image.shape}")
    if image.shape[0] < 2 or image.shape[1] < 2:
        raise ValueError(f"degenerate image of shape {image.shape[:2]}")
    return image


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel-center (align_corners=False) sampling.

    Matches the convention src = (dst + 0.5) * scale - 0.5 with the source
    coordinate clamped at 0, so results agree with the framework resamplers
    that use the same convention.  Pinned here so shuffle-record replay is
    bit-exact.
    """
    image = np.asarray(image, dtype=np.float64)
    in_h, in_w = image.shape[:2]
    sy = np.maximum((np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5, 0.0)
    sx = np.maximum((np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5, 0.0)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (sy - y0)[:, None, None]
    wx = (sx - x0)[None, :, None]
    top = image[y0][:, x0] * (1 - wx) + image[y0][:, x1] * wx
    bottom = image[y1][:, x0] * (1 - wx) + image[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


def _centered_crop_box(height: int, width: int, scale_range) -> tuple:
    """Deterministic fallback: a centered box whose area ratio lands in range."""
    low, high = scale_range
    area = height * width
    start = max(1, min(width, round(width * math.sqrt((low + high) / 2))))
    for w in sorted(range(1, width + 1), key=lambda v: (abs(v - start), v)):
        h_min = max(1, math.ceil(low * area / w))
        h_max = min(height, math.floor(high * area / w))
        if h_min <= h_max:
            h = min(max(round(w * height / width), h_min), h_max)
            return ((width - w) // 2, (height - h) // 2, w, h)
    raise ValueError(
        f"no integer crop of {height}x{width} has area ratio in [{low}, {high}]"
    )


def sample_crop_box(rng: np.random.Generator, height: int, width: int,
                    scale_range, aspect_range=(3 / 4, 4 / 3), attempts: int = 10):
    """Sample an (x, y, w, h) crop whose area ratio lies inside scale_range.

    Rejection-samples the usual (area, log-aspect) parameterization; after
    `attempts` misses it falls back to a deterministic centered box, so the
    area-ratio guarantee holds unconditionally.
    """
    low, high = scale_range
    area = height * width
    log_lo, log_hi = math.log(aspect_range[0]), math.log(aspect_range[1])
    for _ in range(attempts):
        target = rng.uniform(low, high) * area
        aspect = math.exp(rng.uniform(log_lo, log_hi))
        w = round(math.sqrt(target * aspect))
        h = round(math.sqrt(target / aspect))
        if 0 < w <= width and 0 < h <= height and low <= (w * h) / area <= high:
            x = int(rng.integers(0, width - w + 1))
            y = int(rng.integers(0, height - h + 1))
            return (x, y, w, h)
    return _centered_crop_box(height, width, scale_range)


@dataclass(frozen=True)
class ShuffleConfig:
    """Geometry of the patch-shuffle view.

    The crop is resized to a (3*cell) x (3*cell) square, split into a 3x3
    grid of cell x cell tiles, each tile sub-cropped to crop x crop, and the
    nine sub-crops reassembled into a (3*crop) x (3*crop) mosaic.  The
    default 85/64 geometry yields 255 -> 192; the desk preset uses 32/24
    (96 -> 72) with the same structure.
    """
    cell: int = 85
    crop: int = 64
    scale_range: tuple = (0.6, 1.0)
    flip_p: float = 0.5
    vertical_flip: bool = False

    def __post_init__(self):
        if not (0 < self.crop <= self.cell):
            raise ValueError("need 0 < crop <= cell")

    @property
    def resize_to(self) -> int:
        return 3 * self.cell

    @property
    def output_size(self) -> int:
        return 3 * self.crop


@dataclass(frozen=True)
class ShuffleRecord:
    """Complete provenance of one patch-shuffle draw.

    `cell_crops[i]` is the (dx, dy) offset of cell i's sub-crop inside its
    grid cell; `permutation[i]` names the grid cell whose sub-crop lands at
    mosaic position i.  Replaying the record on the source image reproduces
    the view bit-exactly.
    """
    crop_box: tuple          # (x, y, w, h) in source-image coordinates
    flip: bool
    cell_crops: tuple        # 9 x (dx, dy), 0 <= d <= cell - crop
    permutation: tuple       # bijection on 0..8

    def validate(self, config: ShuffleConfig) -> None:
        if sorted(self.permutation) != list(range(9)):
            raise ValueError("permutation is not a bijection on 0..8")
        side = config.cell - config.crop
        for dx, dy in self.cell_crops:
            if not (0 <= dx <= side and 0 <= dy <= side):
                raise ValueError(f"cell crop offset ({dx}, {dy}) outside [0, {side}]")


def _assemble_mosaic(image: np.ndarray, record: ShuffleRecord,
                     config: ShuffleConfig) -> np.ndarray:
    x, y, w, h = record.crop_box
    resized = resize_bilinear(image[y:y + h, x:x + w], config.resize_to, config.resize_to)
    if record.flip:
        axis = 0 if config.vertical_flip else 1
        resized = np.flip(resized, axis=axis)
    out = np.empty((config.output_size, config.output_size, 3), dtype=resized.dtype)
    for pos in range(9):
        cell = record.permutation[pos]
        cr, cc = divmod(cell, 3)
        dx, dy = record.cell_crops[cell]
        top = cr * config.cell + dy
        left = cc * config.cell + dx
        block = resized[top:top + config.crop, left:left + config.crop]
        pr, pc = divmod(pos, 3)
        out[pr * config.crop:(pr + 1) * config.crop,
            pc * config.crop:(pc + 1) * config.crop] = block
    return out


def patch_shuffle(image, rng_seed: int,
                  config: ShuffleConfig = ShuffleConfig()) -> tuple:
    """Draw one patch-shuffle view.

    Returns (view, record) where view is (3*crop) x (3*crop) x 3 and the
    record suffices to reproduce it via :func:`replay_shuffle`.
    """
    image = _pixels(image)
    rng = np.random.default_rng(rng_seed)
    h, w = image.shape[:2]
    crop_box = sample_crop_box(rng, h, w, config.scale_range)
    flip = bool(rng.random() < config.flip_p)
    side = config.cell - config.crop
    offsets = rng.integers(0, side + 1, size=(9, 2))
    permutation = rng.permutation(9)
    record = ShuffleRecord(
        crop_box=crop_box,
        flip=flip,
        cell_crops=tuple((int(dx), int(dy)) for dx, dy in offsets),
        permutation=tuple(int(p) for p in permutation),
    )
    return _assemble_mosaic(image, record, config), record


def replay_shuffle(image, record: ShuffleRecord,
                   config: ShuffleConfig = ShuffleConfig()) -> np.ndarray:
    """Re-execute a logged shuffle record; bit-exact with the original view."""
    image = _pixels(image)
    record.validate(config)
    x, y, w, h = record.crop_box
    if not (0 <= x and 0 <= y and x + w <= image.shape[1] and y + h <= image.shape[0]):
        raise ValueError(f"crop box {record.crop_box} outside image {image.shape[:2]}")
    return _assemble_mosaic(image, record, config)


@dataclass(frozen=True)
class InfoMinConfig:
    """Content-view pipeline: crop, flip, color jitter, grayscale, blur.

    The composition follows the common contrastive-pretraining recipe; every
    element is a knob so alternative published policies can be restored.
    """
    view_size: int = 224
    crop_scale: tuple = (0.2, 1.0)
    flip_p: float = 0.5
    jitter_p: float = 0.8
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    hue: float = 0.1
    grayscale_p: float = 0.2
    blur_p: float = 0.5
    blur_sigma: tuple = (0.1, 2.0)


def _grayscale(image: np.ndarray) -> np.ndarray:
    return image @ _GRAY_WEIGHTS


def _adjust_brightness(image, factor):
    return np.clip(image * factor, 0.0, 1.0)


def _adjust_contrast(image, factor):
    mean = _grayscale(image).mean()
    return np.clip(image * factor + mean * (1 - factor), 0.0, 1.0)


def _adjust_saturation(image, factor):
    gray = _grayscale(image)[..., None]
    return np.clip(image * factor + gray * (1 - factor), 0.0, 1.0)


def _rgb_to_hsv(image):
    r, g, b = image[..., 0], image[..., 1], image[..., 2]
    maxc = image.max(axis=-1)
    minc = image.min(axis=-1)
    delta = maxc - minc
    safe = np.where(delta == 0, 1.0, delta)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta == 0, 0.0, (h / 6.0) % 1.0)
    s = np.where(maxc == 0, 0.0, delta / np.where(maxc == 0, 1.0, maxc))
    return h, s, maxc


def _hsv_to_rgb(h, s, v):
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    choices = [
        np.stack([v, t, p], axis=-1),
        np.stack([q, v, p], axis=-1),
        np.stack([p, v, t], axis=-1),
        np.stack([p, q, v], axis=-1),
        np.stack([t, p, v], axis=-1),
        np.stack([v, p, q], axis=-1),
    ]
    out = np.select([i[..., None] == k for k in range(6)], choices)
    return out


def _adjust_hue(image, shift):
    h, s, v = _rgb_to_hsv(image)
    return np.clip(_hsv_to_rgb((h + shift) % 1.0, s, v), 0.0, 1.0)


def infomin_view(image, rng_seed: int,
                 config: InfoMinConfig = InfoMinConfig()) -> np.ndarray:
    """Draw one content view; deterministic given (image, seed, config)."""
    image = _pixels(image)
    rng = np.random.default_rng(rng_seed)
    h, w = image.shape[:2]

    x, y, cw, ch = sample_crop_box(rng, h, w, config.crop_scale)
    out = resize_bilinear(image[y:y + ch, x:x + cw], config.view_size, config.view_size)

    if rng.random() < config.flip_p:
        out = np.flip(out, axis=1)

    if rng.random() < config.jitter_p:
        order = rng.permutation(4)
        b = rng.uniform(max(0.0, 1 - config.brightness), 1 + config.brightness)
        c = rng.uniform(max(0.0, 1 - config.contrast), 1 + config.contrast)
        s = rng.uniform(max(0.0, 1 - config.saturation), 1 + config.saturation)
        hu = rng.uniform(-config.hue, config.hue)
        ops = {0: lambda im: _adjust_brightness(im, b),
               1: lambda im: _adjust_contrast(im, c),
               2: lambda im: _adjust_saturation(im, s),
               3: lambda im: _adjust_hue(im, hu)}
        for k in order:
            out = ops[int(k)](out)

    if rng.random() < config.grayscale_p:
        out = np.repeat(_grayscale(out)[..., None], 3, axis=-1)

    if rng.random() < config.blur_p:
        sigma = rng.uniform(*config.blur_sigma)
        out = np.stack(
            [ndimage.gaussian_filter(out[..., ch_], sigma, mode="nearest")
             for ch_ in range(3)], axis=-1)

    return np.ascontiguousarray(np.clip(out, 0.0, 1.0))


@dataclass
class ViewQuadruple:
    """The four views of one input: two content views, two shuffle views."""
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    v4: np.ndarray
    shuffle_records: tuple = field(default=())

    def __iter__(self):
        return iter((self.v1, self.v2, self.v3, self.v4))


def make_views(image, rng_seed: int,
               infomin_config: InfoMinConfig = InfoMinConfig(),
               shuffle_config: ShuffleConfig = ShuffleConfig()) -> ViewQuadruple:
    """Expand one image into its four training views.

    The four draws use four decorrelated child seeds spawned from rng_seed,
    so the quadruple is reproducible from (image, seed) alone and the two
    draws within each family are independent.
    """
    image = _pixels(image)
    children = np.random.SeedSequence(rng_seed).spawn(4)
    v1 = infomin_view(image, children[0], infomin_config)
    v2 = infomin_view(image, children[1], infomin_config)
    v3, rec3 = patch_shuffle(image, children[2], shuffle_config)
    v4, rec4 = patch_shuffle(image, children[3], shuffle_config)
    return ViewQuadruple(v1=v1, v2=v2, v3=v3, v4=v4, shuffle_records=(rec3, rec4))
