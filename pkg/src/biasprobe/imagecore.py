"""Canonical image representation and file I/O.

An image is a float32 numpy array of shape (H, W, 3), RGB order, every value
finite and inside [0, 1]. Files on disk are 8-bit RGB PNGs; a byte v maps to
v/255 on load and a value v maps to the byte round(v*255) (half away from
zero) on save. Stored bytes are treated as linear signal: no gamma handling.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError


class DecodeError(ValueError):
    """Raised when a file cannot be read as an 8-bit RGB (or grayscale) PNG."""


def validate_image(image: np.ndarray) -> np.ndarray:
    """Check the (H, W, 3) unit-interval contract; returns the array unchanged."""
    if not isinstance(image, np.ndarray) or image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) array, got shape {getattr(image, 'shape', None)}")
    if not np.isfinite(image).all():
        raise ValueError("image contains non-finite values")
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError(f"image values outside [0, 1]: min={image.min()}, max={image.max()}")
    return image


@dataclass(frozen=True)
class LabeledImage:
    """An image plus its 0-based category index and a provenance string."""

    image: np.ndarray
    label: int
    source_id: str


def load_image(path: str) -> np.ndarray:
    """Load an 8-bit PNG as a float32 (H, W, 3) array of v/255 values.

    Grayscale files are replicated across the 3 channels. Anything that is not
    8 bits per sample is rejected.
    """
    try:
        with Image.open(path) as im:
            if im.mode in ("I", "I;16", "F", "I;16B", "I;16L"):
                raise DecodeError(f"unsupported bit depth ({im.mode}) in {path}")
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)
                arr = np.repeat(arr[:, :, None], 3, axis=2)
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except DecodeError:
        raise
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    return arr.astype(np.float32) / np.float32(255.0)


def save_image(image: np.ndarray, path: str) -> None:
    """Write a valid image as an 8-bit RGB PNG; value v stored as round(v*255)."""
    validate_image(image)
    # floor(x + 0.5) is round-half-away-from-zero for non-negative x;
    # np.round would round half to even and break the stated byte mapping.
    data = np.floor(image.astype(np.float64) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def quantize_unit(image: np.ndarray) -> np.ndarray:
    """Snap values to the 8-bit grid (round(v*255)/255), the save/load fixpoint."""
    q = np.floor(image.astype(np.float64) * 255.0 + 0.5)
    return (q.astype(np.float32) / np.float32(255.0)).astype(np.float32)


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel-centered sampling.

    Output pixel (i, j) samples the input at ((i+0.5)*H/out_h - 0.5,
    (j+0.5)*W/out_w - 0.5), coordinates clamped to the valid range. Weights
    are convex, so output values never overshoot the input's min/max.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be >= 1")
    h, w = image.shape[:2]
    if (out_h, out_w) == (h, w):
        return image.astype(np.float32, copy=True)

    src = image.astype(np.float64)
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bot = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    out = top * (1 - wy) + bot * wy
    return out.astype(np.float32)


def center_crop_to_multiple(image: np.ndarray, n: int) -> np.ndarray:
    """Crop to the largest dimensions that are multiples of n, keeping the center.

    When an odd number of rows/cols must go, the kept window is biased one
    pixel toward the bottom/right.
    """
    h, w = image.shape[:2]
    if n < 1 or n > min(h, w):
        raise ValueError(f"grid divisor {n} out of range for {h}x{w} image")
    out_h = (h // n) * n
    out_w = (w // n) * n
    top = (h - out_h + 1) // 2
    left = (w - out_w + 1) // 2
    return image[top:top + out_h, left:left + out_w].copy()
