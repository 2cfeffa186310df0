"""Bias-probing classification tasks.

A task is a labeled train/val split of unit-interval RGB images. Tasks come
from image directories (user-supplied data) or from the synthetic generator,
which renders one filled shape per image on a mid-gray background so that, by
construction, only texture (or only shape) distinguishes the classes.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .imagecore import LabeledImage, load_image, resize_bilinear, save_image
from .rng import MASK64, SplitMix64

TEXTURE_MODE = "texture"
SHAPE_MODE = "shape"

TEXTURES = ("hstripes", "vstripes", "checker", "dots")
SHAPES = ("disc", "square", "triangle", "star")

# Rendering constants. The fill is bright (tones 0.92/1.0 on a 0.5 background)
# so the shape outline survives mean-shift texture weakening (outline color
# distance 0.73 > default range radius 0.2) while the internal two-tone texture
# does not (tone distance 0.14 < 0.2); the outline step also clears the default
# edge-detection threshold (luminance jump >= 0.42 -> unit-scaled response
# >= 0.21) while texture-internal steps stay far below it.
TEX_PERIOD = 6
TEX_DARK = 0.92
TEX_LIGHT = 1.0
BACKGROUND = 0.5
_STAR_INNER = math.sin(math.pi / 10) / math.sin(3 * math.pi / 10)  # pentagram ratio
_STAR_AREA = 5.0 * _STAR_INNER * math.sin(math.pi / 5)  # area of unit-outer-radius star


@dataclass(frozen=True)
class TaskSpec:
    name: str
    categories: tuple[str, ...]
    train: list[LabeledImage]
    val: list[LabeledImage]
    target_category: int = 0

    def __post_init__(self):
        ncat = len(self.categories)
        for im in list(self.train) + list(self.val):
            if not 0 <= im.label < ncat:
                raise ValueError(f"label {im.label} out of range for {ncat} categories")
        train_ids = {im.source_id for im in self.train}
        if any(im.source_id in train_ids for im in self.val):
            raise ValueError("train and val share source ids")


@dataclass(frozen=True)
class SyntheticTaskSpec:
    mode: str = TEXTURE_MODE
    classes: int = 4
    per_class_train: int = 300
    per_class_val: int = 50
    image_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (TEXTURE_MODE, SHAPE_MODE):
            raise ValueError(f"mode must be {TEXTURE_MODE!r} or {SHAPE_MODE!r}")
        if not 1 <= self.classes <= 4:
            raise ValueError(f"classes must be in 1..4 (vocabulary has 4), got {self.classes}")
        if self.per_class_train < 1 or self.per_class_val < 1:
            raise ValueError("per-class counts must be >= 1")
        if self.image_size < 16:
            raise ValueError("image_size must be >= 16")


@dataclass(frozen=True)
class AugmentSpec:
    horizontal_flip_prob: float = 0.5
    max_shift_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.horizontal_flip_prob <= 1.0:
            raise ValueError("flip probability must be in [0, 1]")
        if not 0.0 <= self.max_shift_fraction < 0.5:
            raise ValueError("shift fraction must be in [0, 0.5)")


def render_texture(kind: str, size: int, phase_y: int = 0, phase_x: int = 0) -> np.ndarray:
    """Full-frame two-tone texture field (H, W), period TEX_PERIOD pixels."""
    y = (np.arange(size)[:, None] + phase_y)
    x = (np.arange(size)[None, :] + phase_x)
    half = TEX_PERIOD // 2
    if kind == "hstripes":
        light = ((y // half) % 2 == 0) & np.ones_like(x, dtype=bool)
    elif kind == "vstripes":
        light = ((x // half) % 2 == 0) & np.ones_like(y, dtype=bool)
    elif kind == "checker":
        light = ((y // half + x // half) % 2) == 0
    elif kind == "dots":
        u = (y % TEX_PERIOD) - (TEX_PERIOD - 1) / 2.0
        v = (x % TEX_PERIOD) - (TEX_PERIOD - 1) / 2.0
        r2 = (TEX_PERIOD * TEX_PERIOD / 2.0) / math.pi  # ~50% duty disc
        light = (u * u + v * v) <= r2
    else:
        raise ValueError(f"unknown texture {kind!r}")
    out = np.where(light, TEX_LIGHT, TEX_DARK)
    return np.broadcast_to(out, (size, size)).astype(np.float64)


def _polygon_mask(verts: np.ndarray, size: int) -> np.ndarray:
    """Even-odd point-in-polygon test, pixel centers at integer coordinates."""
    yy = np.arange(size, dtype=np.float64)[:, None]
    xx = np.arange(size, dtype=np.float64)[None, :]
    inside = np.zeros((size, size), dtype=bool)
    m = len(verts)
    for i in range(m):
        y0, x0 = verts[i]
        y1, x1 = verts[(i + 1) % m]
        cond = (y0 > yy) != (y1 > yy)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x0 + (yy - y0) * (x1 - x0) / (y1 - y0)
        inside ^= cond & (xx < xint)
    return inside


def render_shape_mask(kind: str, size: int, cy: float, cx: float,
                      extent: float, angle: float) -> np.ndarray:
    """Hard-edged filled-shape mask; all shapes of equal `extent` share the
    same pixel area as a disc of diameter `extent` (so area alone never
    identifies the shape class)."""
    area = math.pi * (extent / 2.0) ** 2
    if kind == "disc":
        yy = np.arange(size, dtype=np.float64)[:, None] - cy
        xx = np.arange(size, dtype=np.float64)[None, :] - cx
        return (yy * yy + xx * xx) <= (extent / 2.0) ** 2
    if kind == "square":
        half_diag = math.sqrt(area) * math.sqrt(2.0) / 2.0
        angles = angle + math.pi / 4 + np.arange(4) * (math.pi / 2)
        radii = np.full(4, half_diag)
    elif kind == "triangle":
        side = math.sqrt(4.0 * area / math.sqrt(3.0))
        angles = angle + math.pi / 2 + np.arange(3) * (2 * math.pi / 3)
        radii = np.full(3, side / math.sqrt(3.0))
    elif kind == "star":
        outer = math.sqrt(area / _STAR_AREA)
        angles = angle + math.pi / 2 + np.arange(10) * (math.pi / 5)
        radii = np.where(np.arange(10) % 2 == 0, outer, outer * _STAR_INNER)
    else:
        raise ValueError(f"unknown shape {kind!r}")
    verts = np.stack([cy - radii * np.sin(angles), cx + radii * np.cos(angles)], axis=1)
    return _polygon_mask(verts, size)


def _render_image(shape_kind: str, texture_kind: str, size: int, rng: SplitMix64) -> np.ndarray:
    # Fixed draw order: extent, dy, dx, angle, texture phase y, phase x.
    extent = (0.4 + 0.3 * rng.next_float()) * size
    cy = size / 2.0 + (2.0 * rng.next_float() - 1.0) * 0.2 * size
    cx = size / 2.0 + (2.0 * rng.next_float() - 1.0) * 0.2 * size
    angle = 2.0 * math.pi * rng.next_float()
    phase_y = rng.next_below(TEX_PERIOD)
    phase_x = rng.next_below(TEX_PERIOD)
    mask = render_shape_mask(shape_kind, size, cy, cx, extent, angle)
    tex = render_texture(texture_kind, size, phase_y, phase_x)
    img = np.full((size, size), BACKGROUND, dtype=np.float64)
    img[mask] = tex[mask]
    return np.repeat(img[:, :, None], 3, axis=2).astype(np.float32)


def generate_synthetic_task(spec: SyntheticTaskSpec) -> TaskSpec:
    """Render a task whose discriminative feature is known by construction.

    Texture mode: every class is a disc, each class with its own fill texture.
    Shape mode: every class is horizontal stripes, each class with its own
    shape. Each image draws from the substream splitmix64(seed XOR image
    index), so generation is order- and schedule-independent.
    """
    if spec.mode == TEXTURE_MODE:
        categories = TEXTURES[:spec.classes]
        shape_for = lambda c: "disc"
        texture_for = lambda c: TEXTURES[c]
    else:
        categories = SHAPES[:spec.classes]
        shape_for = lambda c: SHAPES[c]
        texture_for = lambda c: "hstripes"

    def make(split: str, per_class: int, index_base: int) -> list[LabeledImage]:
        out = []
        for c in range(spec.classes):
            for i in range(per_class):
                idx = index_base + c * per_class + i
                rng = SplitMix64((spec.seed ^ idx) & MASK64)
                img = _render_image(shape_for(c), texture_for(c), spec.image_size, rng)
                out.append(LabeledImage(img, c, f"synthetic/{spec.mode}/{split}/{categories[c]}/{i:05d}"))
        return out

    train = make("train", spec.per_class_train, 0)
    val = make("val", spec.per_class_val, spec.classes * spec.per_class_train)
    return TaskSpec(name=f"synthetic-{spec.mode}", categories=tuple(categories),
                    train=train, val=val, target_category=0)


def materialize_task(task: TaskSpec, root: str) -> None:
    """Write a task to disk in the <root>/{train,val}/<category>/<name>.png layout."""
    for split, images in (("train", task.train), ("val", task.val)):
        for cat in task.categories:
            os.makedirs(os.path.join(root, split, cat), exist_ok=True)
        per_cat_counter = {c: 0 for c in range(len(task.categories))}
        for im in images:
            i = per_cat_counter[im.label]
            per_cat_counter[im.label] += 1
            save_image(im.image, os.path.join(root, split, task.categories[im.label], f"{i:05d}.png"))


def build_task_from_dirs(root: str, categories: list[str], target: str,
                         train_n: int, val_n: int, image_size: int) -> TaskSpec:
    """Load a task from <root>/{train,val}/<category>/ directories.

    Selection is deterministic (sorted filenames, first N per category); each
    image is resized to image_size if needed. A missing directory or a
    category with too few images is an error naming the offender.
    """
    if target not in categories:
        raise ValueError(f"target {target!r} not in categories {categories}")
    splits: dict[str, list[LabeledImage]] = {}
    for split, cap in (("train", train_n), ("val", val_n)):
        images: list[LabeledImage] = []
        for label, cat in enumerate(categories):
            d = os.path.join(root, split, cat)
            if not os.path.isdir(d):
                raise FileNotFoundError(f"missing directory {d}")
            names = sorted(f for f in os.listdir(d) if f.lower().endswith(".png"))
            if len(names) < cap:
                raise ValueError(f"category {cat!r} has {len(names)} {split} images, need {cap}")
            for name in names[:cap]:
                path = os.path.join(d, name)
                img = load_image(path)
                if img.shape[0] != image_size or img.shape[1] != image_size:
                    img = resize_bilinear(img, image_size, image_size)
                images.append(LabeledImage(img, label, os.path.join(split, cat, name)))
        splits[split] = images
    return TaskSpec(name=os.path.basename(os.path.normpath(root)) or root,
                    categories=tuple(categories), train=splits["train"], val=splits["val"],
                    target_category=categories.index(target))


def augment(image: np.ndarray, spec: AugmentSpec, rng: SplitMix64) -> np.ndarray:
    """Random horizontal flip, then integer shift with edge-replicated fill.

    Consumes exactly three draws (flip, dy, dx) regardless of parameters, so
    downstream draws stay aligned.
    """
    h, w = image.shape[:2]
    flip = rng.next_float() < spec.horizontal_flip_prob
    my = int(spec.max_shift_fraction * h)
    mx = int(spec.max_shift_fraction * w)
    dy = rng.next_below(2 * my + 1) - my
    dx = rng.next_below(2 * mx + 1) - mx
    out = image[:, ::-1] if flip else image
    if dy or dx:
        rows = np.clip(np.arange(h) - dy, 0, h - 1)
        cols = np.clip(np.arange(w) - dx, 0, w - 1)
        out = out[rows][:, cols]
    return np.ascontiguousarray(out)
