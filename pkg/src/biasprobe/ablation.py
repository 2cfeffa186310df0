"""Feature-removal operators: color, texture, shape edges, spatial topology.

Each operator suppresses one image cue while preserving the others as far as
possible, and (except color removal) takes a window-size strength parameter
that sweep harnesses vary. All operators are pure and deterministic: identical
inputs give bit-identical outputs regardless of thread schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .imagecore import center_crop_to_multiple, validate_image
from .rng import SplitMix64

COLOR_REMOVAL = "color"
TEXTURE_WEAKEN = "texture"
SHAPE_WEAKEN = "shape"
TOPOLOGY_SHUFFLE = "topology"
KINDS = (COLOR_REMOVAL, TEXTURE_WEAKEN, SHAPE_WEAKEN, TOPOLOGY_SHUFFLE)

DEFAULT_RANGE_RADIUS = 0.2
DEFAULT_EDGE_THRESHOLD = 0.2
DEFAULT_MAX_ITER = 5
DEFAULT_EPS = 1e-3


@dataclass(frozen=True)
class AblationSpec:
    """One feature-removal operator plus its strength parameters.

    `window` is the filter window side for texture/shape weakening and the
    grid side for topology shuffling; color removal ignores it.
    """

    kind: str
    window: int = 1
    range_radius: float = DEFAULT_RANGE_RADIUS
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ablation kind {self.kind!r}")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 1, got {self.window}")
        if not 0.0 < self.range_radius <= 1.0:
            raise ValueError(f"range_radius must be in (0, 1], got {self.range_radius}")
        if not 0.0 < self.edge_threshold <= 1.0:
            raise ValueError(f"edge_threshold must be in (0, 1], got {self.edge_threshold}")


def remove_color(image: np.ndarray) -> np.ndarray:
    """Replace every pixel by its channel mean: R = G = B = (r+g+b)/3."""
    gray = image.astype(np.float64).mean(axis=2)
    return np.repeat(gray[:, :, None], 3, axis=2).astype(np.float32)


def mean_shift_filter(
    image: np.ndarray,
    spatial_window: int,
    range_radius: float = DEFAULT_RANGE_RADIUS,
    max_iter: int = DEFAULT_MAX_ITER,
    eps: float = DEFAULT_EPS,
) -> np.ndarray:
    """Flat-kernel mean-shift smoothing in the joint (x, y, R, G, B) domain.

    Each pixel's state starts at its own (position, color) and is repeatedly
    replaced by the mean of all input pixels that lie within the square window
    of side `spatial_window` centered on the current position AND within
    Euclidean RGB distance `range_radius` of the current color. Iteration
    stops once the joint state moves less than `eps` or after `max_iter`
    updates; the output pixel takes the converged color. Texture flattens,
    while edges stronger than the color radius survive.
    """
    if spatial_window < 1 or spatial_window % 2 == 0:
        raise ValueError(f"spatial_window must be odd and >= 1, got {spatial_window}")
    if range_radius <= 0:
        raise ValueError("range_radius must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if eps < 0:
        raise ValueError("eps must be >= 0")

    h, w = image.shape[:2]
    half = (spatial_window - 1) // 2
    src = image.astype(np.float64)
    flat = src.reshape(-1, 3)
    r2 = float(range_radius) ** 2

    grid_y, grid_x = np.meshgrid(np.arange(h, dtype=np.float64),
                                 np.arange(w, dtype=np.float64), indexing="ij")
    pos_y, pos_x = grid_y.copy(), grid_x.copy()
    col = src.copy()
    active = np.ones((h, w), dtype=bool)

    offsets = np.arange(-half, half + 1)
    for _ in range(max_iter):
        if not active.any():
            break
        ay, ax = np.nonzero(active)
        cy, cx = pos_y[ay, ax], pos_x[ay, ax]
        cc = col[ay, ax]
        # Integer rows/cols inside the window around a fractional center all
        # fall in floor(c + 0.5) +- half, so a fixed offset grid suffices.
        by = np.floor(cy + 0.5).astype(np.intp)
        bx = np.floor(cx + 0.5).astype(np.intp)

        sum_y = np.zeros(len(ay))
        sum_x = np.zeros(len(ay))
        sum_c = np.zeros((len(ay), 3))
        count = np.zeros(len(ay))
        for dy in offsets:
            iy = by + dy
            ok_y = (np.abs(iy - cy) <= half) & (iy >= 0) & (iy < h)
            iyc = np.clip(iy, 0, h - 1)
            for dx in offsets:
                ix = bx + dx
                ok = ok_y & (np.abs(ix - cx) <= half) & (ix >= 0) & (ix < w)
                ixc = np.clip(ix, 0, w - 1)
                nb = flat[iyc * w + ixc]
                d = nb - cc
                ok = ok & ((d * d).sum(axis=1) <= r2)
                okf = ok.astype(np.float64)
                count += okf
                sum_y += np.where(ok, iy, 0)
                sum_x += np.where(ok, ix, 0)
                sum_c += nb * okf[:, None]

        nonempty = count > 0
        safe = np.where(nonempty, count, 1.0)
        new_y = np.where(nonempty, sum_y / safe, cy)
        new_x = np.where(nonempty, sum_x / safe, cx)
        new_c = np.where(nonempty[:, None], sum_c / safe[:, None], cc)

        move2 = (new_y - cy) ** 2 + (new_x - cx) ** 2 + ((new_c - cc) ** 2).sum(axis=1)
        pos_y[ay, ax], pos_x[ay, ax] = new_y, new_x
        col[ay, ax] = new_c
        still = move2 >= eps * eps
        active[ay, ax] = still

    return col.astype(np.float32)


def detect_edges(image: np.ndarray, threshold: float = DEFAULT_EDGE_THRESHOLD) -> np.ndarray:
    """Boolean edge mask from a unit-scaled 3x3 gradient magnitude.

    Luminance (r+g+b)/3 is cross-correlated with [[-1,0,1],[-2,0,2],[-1,0,1]]
    and its transpose under replicate padding; a pixel is an edge where
    sqrt(gx^2 + gy^2)/8 >= threshold (a clean unit step scores 0.5).
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    lum = image.astype(np.float64).mean(axis=2)
    p = np.pad(lum, 1, mode="edge")
    gx = (p[0:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]
          - p[0:-2, 0:-2] - 2.0 * p[1:-1, 0:-2] - p[2:, 0:-2])
    gy = (p[2:, 0:-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]
          - p[0:-2, 0:-2] - 2.0 * p[0:-2, 1:-1] - p[0:-2, 2:])
    g = np.hypot(gx, gy)
    return (g / 8.0) >= threshold


def dilate_mask(mask: np.ndarray, window: int) -> np.ndarray:
    """Binary dilation by a square structuring element of side `window`."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    half = (window - 1) // 2
    if half == 0:
        return mask.copy()
    out = np.zeros_like(mask)
    h, w = mask.shape
    for dy in range(-half, half + 1):
        ys = slice(max(0, dy), min(h, h + dy))
        yd = slice(max(0, -dy), min(h, h - dy))
        for dx in range(-half, half + 1):
            xs = slice(max(0, dx), min(w, w + dx))
            xd = slice(max(0, -dx), min(w, w - dx))
            out[yd, xd] |= mask[ys, xs]
    return out


def gaussian_blur(image: np.ndarray, window: int, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel side `window`, replicate padding.

    The truncated kernel is renormalized so weights sum to 1.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    half = (window - 1) // 2
    if half == 0:
        return image.astype(np.float32, copy=True)
    d = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(d * d) / (2.0 * sigma * sigma))
    k /= k.sum()
    src = image.astype(np.float64)
    p = np.pad(src, ((half, half), (0, 0), (0, 0)), mode="edge")
    tmp = np.zeros_like(src)
    for i, kv in enumerate(k):
        tmp += kv * p[i:i + src.shape[0]]
    p = np.pad(tmp, ((0, 0), (half, half), (0, 0)), mode="edge")
    out = np.zeros_like(src)
    for i, kv in enumerate(k):
        out += kv * p[:, i:i + src.shape[1]]
    return out.astype(np.float32)


def weaken_shape(
    image: np.ndarray,
    window: int,
    threshold: float = DEFAULT_EDGE_THRESHOLD,
) -> np.ndarray:
    """Blur the image only inside a detected-and-dilated edge band.

    The band is detect_edges(image, threshold) dilated by a square element of
    side `window`; inside it the pixel takes the Gaussian blur (kernel side
    `window`, sigma window/3), outside it the input value bit-exactly.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    src = image.astype(np.float32, copy=True)
    if window == 1:
        return src
    mask = dilate_mask(detect_edges(image, threshold), window)
    if not mask.any():
        return src
    blurred = gaussian_blur(image, window, window / 3.0)
    src[mask] = blurred[mask]
    return src


def shuffle_topology(image: np.ndarray, n: int, seed: int = 0) -> np.ndarray:
    """Partition into an n x n grid of equal tiles and permute them.

    The permutation is a Fisher-Yates shuffle driven by splitmix64(seed);
    output grid cell g receives input tile perm[g]. Requires both dimensions
    to be multiples of n (center_crop_to_multiple beforehand if not).
    """
    if n < 1:
        raise ValueError("grid side must be >= 1")
    h, w = image.shape[:2]
    if h % n or w % n:
        raise ValueError(f"dimensions {h}x{w} not divisible by grid side {n}")
    if n == 1:
        return image.astype(np.float32, copy=True)
    th, tw = h // n, w // n
    perm = SplitMix64(seed).permutation(n * n)
    out = np.empty_like(image, dtype=np.float32)
    for g, src_idx in enumerate(perm):
        gy, gx = divmod(g, n)
        sy, sx = divmod(src_idx, n)
        out[gy * th:(gy + 1) * th, gx * tw:(gx + 1) * tw] = \
            image[sy * th:(sy + 1) * th, sx * tw:(sx + 1) * tw]
    return out


def apply(spec: AblationSpec, image: np.ndarray) -> np.ndarray:
    """Dispatch to the operator named by spec.kind with spec's parameters.

    Topology shuffling center-crops first so any image size is accepted.
    """
    validate_image(image)
    if spec.kind == COLOR_REMOVAL:
        return remove_color(image)
    if spec.kind == TEXTURE_WEAKEN:
        return mean_shift_filter(image, spec.window, spec.range_radius)
    if spec.kind == SHAPE_WEAKEN:
        return weaken_shape(image, spec.window, spec.edge_threshold)
    if spec.kind == TOPOLOGY_SHUFFLE:
        cropped = center_crop_to_multiple(image, spec.window)
        return shuffle_topology(cropped, spec.window, spec.seed)
    raise ValueError(f"unknown ablation kind {spec.kind!r}")


def sweep_levels(kind: str, windows: Sequence[int], base: AblationSpec | None = None) -> list[AblationSpec]:
    """One spec per window, all other parameters from `base`.

    Windows must be strictly increasing and odd; they are the strength axis of
    a sweep (larger window = stronger weakening).
    """
    windows = list(windows)
    if not windows:
        raise ValueError("windows list must be non-empty")
    if any(w < 1 or w % 2 == 0 for w in windows):
        raise ValueError(f"windows must all be odd and >= 1: {windows}")
    if any(b >= a for a, b in zip(windows[1:], windows)):
        raise ValueError(f"windows must be strictly increasing: {windows}")
    if base is None:
        base = AblationSpec(kind=kind)
    return [replace(base, kind=kind, window=w) for w in windows]
