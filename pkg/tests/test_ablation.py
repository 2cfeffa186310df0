import math

import numpy as np
import pytest

from biasprobe.ablation import (
    AblationSpec,
    apply,
    detect_edges,
    dilate_mask,
    gaussian_blur,
    mean_shift_filter,
    remove_color,
    shuffle_topology,
    sweep_levels,
    weaken_shape,
)
from biasprobe.imagecore import center_crop_to_multiple, validate_image
from biasprobe.rng import SplitMix64, uniform_stream


def random_image(h, w, seed=0):
    return uniform_stream(seed, h * w * 3).reshape(h, w, 3).astype(np.float32)


# ---------------------------------------------------------------- remove_color

def test_remove_color_channel_mean():
    img = np.zeros((1, 1, 3), dtype=np.float32)
    img[0, 0] = (0.3, 0.6, 0.9)
    out = remove_color(img)
    np.testing.assert_allclose(out[0, 0], [0.6, 0.6, 0.6], atol=1e-7)


def test_remove_color_gray_fixed_point():
    img = np.full((3, 3, 3), 0.5, dtype=np.float32)
    np.testing.assert_array_equal(remove_color(img), img)


def test_remove_color_per_pixel_oracle():
    img = random_image(9, 7, 3)
    out = remove_color(img)
    for y in range(9):
        for x in range(7):
            m = (float(img[y, x, 0]) + float(img[y, x, 1]) + float(img[y, x, 2])) / 3.0
            assert abs(out[y, x, 0] - m) < 1e-7
            assert out[y, x, 0] == out[y, x, 1] == out[y, x, 2]


def test_remove_color_idempotent():
    for seed in range(4):
        img = random_image(6, 6, seed)
        once = remove_color(img)
        np.testing.assert_array_equal(remove_color(once), once)


# ------------------------------------------------------------ mean_shift_filter

def mean_shift_oracle(img, window, radius, max_iter, eps):
    """Direct per-pixel transcription of the joint-domain iteration."""
    h, w = img.shape[:2]
    half = (window - 1) // 2
    src = img.astype(np.float64)
    out = np.zeros_like(src)
    for py in range(h):
        for px in range(w):
            cy, cx = float(py), float(px)
            cc = src[py, px].copy()
            for _ in range(max_iter):
                pts = []
                for iy in range(h):
                    if abs(iy - cy) > half:
                        continue
                    for ix in range(w):
                        if abs(ix - cx) > half:
                            continue
                        d = src[iy, ix] - cc
                        if float(d @ d) <= radius * radius:
                            pts.append((iy, ix, src[iy, ix]))
                if not pts:
                    break
                ny = sum(p[0] for p in pts) / len(pts)
                nx = sum(p[1] for p in pts) / len(pts)
                nc = sum((p[2] for p in pts), np.zeros(3)) / len(pts)
                move2 = (ny - cy) ** 2 + (nx - cx) ** 2 + float((nc - cc) @ (nc - cc))
                cy, cx, cc = ny, nx, nc
                if move2 < eps * eps:
                    break
            out[py, px] = cc
    return out.astype(np.float32)


def test_mean_shift_constant_image_unchanged():
    img = np.full((5, 5, 3), 0.4, dtype=np.float32)
    for window in (1, 3, 5):
        np.testing.assert_allclose(mean_shift_filter(img, window), img, atol=1e-7)


def test_mean_shift_window_one_identity():
    img = random_image(6, 5, 9)
    np.testing.assert_array_equal(mean_shift_filter(img, 1), img)


def test_mean_shift_two_halves_converge_separately():
    img = np.zeros((4, 4, 3), dtype=np.float32)
    a = np.array([0.2, 0.3, 0.1], dtype=np.float32)
    b = np.array([0.8, 0.7, 0.9], dtype=np.float32)  # ||a-b|| = 1.04 > 0.2
    img[:, :2] = a
    img[:, 2:] = b
    out = mean_shift_filter(img, 3, 0.2, 5, 1e-3)
    np.testing.assert_allclose(out[:, :2], np.broadcast_to(a, (4, 2, 3)), atol=1e-6)
    np.testing.assert_allclose(out[:, 2:], np.broadcast_to(b, (4, 2, 3)), atol=1e-6)
    oracle = mean_shift_oracle(img, 3, 0.2, 5, 1e-3)
    np.testing.assert_allclose(out, oracle, atol=1e-9)


@pytest.mark.parametrize("seed,window,radius", [(0, 3, 0.2), (1, 3, 0.5), (2, 5, 0.3)])
def test_mean_shift_oracle_agreement_random_4x4(seed, window, radius):
    img = random_image(4, 4, seed)
    out = mean_shift_filter(img, window, radius, 4, 1e-3)
    oracle = mean_shift_oracle(img, window, radius, 4, 1e-3)
    np.testing.assert_allclose(out, oracle, atol=1e-9)


def test_mean_shift_flattens_low_contrast_texture():
    # two tones inside the color radius merge toward their joint mean
    img = np.zeros((8, 8, 3), dtype=np.float32)
    img[::2] = 0.5
    img[1::2] = 0.55
    out = mean_shift_filter(img, 7, 0.2, 8, 1e-4)
    assert out.std() < 0.01
    assert abs(out.mean() - 0.525) < 0.01


def test_mean_shift_parameter_validation():
    img = random_image(4, 4)
    with pytest.raises(ValueError):
        mean_shift_filter(img, 2)
    with pytest.raises(ValueError):
        mean_shift_filter(img, 3, -0.1)
    with pytest.raises(ValueError):
        mean_shift_filter(img, 3, 0.2, 0)


# ---------------------------------------------------------------- detect_edges

def test_detect_edges_constant_all_false():
    img = np.full((6, 6, 3), 0.8, dtype=np.float32)
    assert not detect_edges(img, 0.2).any()


def test_detect_edges_unit_step_response():
    # vertical 0 -> 1 step: hand convolution gives |gx| = 4 on both sides of
    # the step under replicate padding, so g/8 = 0.5 >= 0.2
    img = np.zeros((5, 6, 3), dtype=np.float32)
    img[:, 3:] = 1.0
    mask = detect_edges(img, 0.2)
    assert mask[:, 2].all() and mask[:, 3].all()
    assert not mask[:, 0].any() and not mask[:, 5].any()
    # threshold just above 0.5 suppresses the step
    assert not detect_edges(img, 0.51).any()


def test_detect_edges_mirror_symmetry():
    for seed in range(4):
        img = random_image(8, 9, seed)
        mask = detect_edges(img, 0.15)
        mirrored = detect_edges(img[:, ::-1].copy(), 0.15)
        np.testing.assert_array_equal(mirrored, mask[:, ::-1])


def test_detect_edges_threshold_validation():
    with pytest.raises(ValueError):
        detect_edges(random_image(4, 4), 0.0)


# ---------------------------------------------------------------- weaken_shape

def gaussian_blur_oracle(img, window, sigma):
    """Dense 2D convolution with the separable kernel's outer product."""
    half = (window - 1) // 2
    d = np.arange(-half, half + 1, dtype=np.float64)
    k1 = np.exp(-(d * d) / (2 * sigma * sigma))
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    src = img.astype(np.float64)
    p = np.pad(src, ((half, half), (half, half), (0, 0)), mode="edge")
    out = np.zeros_like(src)
    for y in range(img.shape[0]):
        for x in range(img.shape[1]):
            patch = p[y:y + window, x:x + window]
            out[y, x] = (patch * k2[:, :, None]).sum(axis=(0, 1))
    return out


def test_weaken_shape_constant_unchanged():
    img = np.full((6, 6, 3), 0.3, dtype=np.float32)
    np.testing.assert_array_equal(weaken_shape(img, 5), img)


def test_weaken_shape_window_one_identity():
    img = random_image(6, 6, 11)
    np.testing.assert_array_equal(weaken_shape(img, 1), img)


def test_weaken_shape_step_edge_blur_and_locality():
    img = np.zeros((12, 12, 3), dtype=np.float32)
    img[:, 6:] = 1.0
    window = 5
    out = weaken_shape(img, window, 0.2)
    mask = dilate_mask(detect_edges(img, 0.2), window)
    blur = gaussian_blur_oracle(img, window, window / 3.0)
    assert mask.any() and not mask.all()
    np.testing.assert_array_equal(out[~mask], img[~mask])  # bit-exact outside
    np.testing.assert_allclose(out[mask], blur[mask], atol=1e-6)


def test_weaken_shape_locality_random():
    for seed in range(3):
        img = (random_image(10, 10, seed) * 0.2).astype(np.float32)
        img[3:7, 3:7] += 0.75  # a strong square edge
        img = img.clip(0, 1)
        out = weaken_shape(img, 3, 0.2)
        mask = dilate_mask(detect_edges(img, 0.2), 3)
        np.testing.assert_array_equal(out[~mask], img[~mask])


def test_gaussian_blur_matches_oracle():
    img = random_image(9, 8, 21)
    for window in (3, 5, 7):
        out = gaussian_blur(img, window, window / 3.0)
        np.testing.assert_allclose(out, gaussian_blur_oracle(img, window, window / 3.0),
                                   atol=1e-6)


def test_dilate_mask_square_element():
    mask = np.zeros((7, 7), dtype=bool)
    mask[3, 3] = True
    out = dilate_mask(mask, 3)
    expected = np.zeros((7, 7), dtype=bool)
    expected[2:5, 2:5] = True
    np.testing.assert_array_equal(out, expected)
    np.testing.assert_array_equal(dilate_mask(mask, 1), mask)


# ------------------------------------------------------------- shuffle_topology

def test_shuffle_n1_identity():
    img = random_image(6, 6, 1)
    np.testing.assert_array_equal(shuffle_topology(img, 1, seed=99), img)


def test_shuffle_preserves_pixel_multiset():
    for n, seed in ((2, 0), (3, 5), (4, 123)):
        img = random_image(12, 12, seed)
        out = shuffle_topology(img, n, seed=seed)
        np.testing.assert_array_equal(np.sort(out.ravel()), np.sort(img.ravel()))
        for c in range(3):
            np.testing.assert_array_equal(np.sort(out[:, :, c].ravel()),
                                          np.sort(img[:, :, c].ravel()))


def test_shuffle_matches_reference_permutation_n2_seed0():
    # independent recomputation: splitmix64(0) drives a 4-element Fisher-Yates
    def sm64(seed, count):
        out, state = [], seed
        for _ in range(count):
            state = (state + 0x9E3779B97F4A7C15) % 2**64
            z = state
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % 2**64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % 2**64
            out.append(z ^ (z >> 31))
        return out

    perm = [0, 1, 2, 3]
    draws = sm64(0, 3)
    for i, d in zip((3, 2, 1), draws):
        j = d % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]

    img = random_image(8, 8, 42)
    out = shuffle_topology(img, 2, seed=0)
    tiles_in = [img[r * 4:(r + 1) * 4, c * 4:(c + 1) * 4] for r in range(2) for c in range(2)]
    tiles_out = [out[r * 4:(r + 1) * 4, c * 4:(c + 1) * 4] for r in range(2) for c in range(2)]
    for g in range(4):
        np.testing.assert_array_equal(tiles_out[g], tiles_in[perm[g]])


def test_shuffle_inverse_recovers_input():
    img = random_image(9, 9, 7)
    out = shuffle_topology(img, 3, seed=17)
    perm = SplitMix64(17).permutation(9)
    inverse = [0] * 9
    for g, src in enumerate(perm):
        inverse[src] = g
    back = np.empty_like(out)
    t = 3
    for g, src in enumerate(inverse):
        gy, gx = divmod(g, 3)
        sy, sx = divmod(src, 3)
        back[gy * t:(gy + 1) * t, gx * t:(gx + 1) * t] = out[sy * t:(sy + 1) * t, sx * t:(sx + 1) * t]
    np.testing.assert_array_equal(back, img)


def test_shuffle_rejects_indivisible():
    with pytest.raises(ValueError):
        shuffle_topology(random_image(7, 6), 3)


# -------------------------------------------------------------- apply dispatch

def test_apply_color_on_gray_unchanged():
    img = np.full((4, 4, 3), 0.25, dtype=np.float32)
    np.testing.assert_array_equal(apply(AblationSpec("color"), img), img)


def test_apply_topology_n1_identity():
    img = random_image(5, 5, 3)
    np.testing.assert_array_equal(apply(AblationSpec("topology", window=1), img), img)


def test_apply_topology_crops_then_shuffles():
    img = random_image(10, 10, 3)
    out = apply(AblationSpec("topology", window=3, seed=4), img)
    expected = shuffle_topology(center_crop_to_multiple(img, 3), 3, seed=4)
    np.testing.assert_array_equal(out, expected)


def test_apply_texture_equals_direct_call():
    for seed in range(3):
        img = random_image(6, 6, seed)
        spec = AblationSpec("texture", window=3, range_radius=0.3)
        np.testing.assert_array_equal(apply(spec, img),
                                      mean_shift_filter(img, 3, 0.3))


def test_apply_shape_equals_direct_call():
    img = random_image(8, 8, 2)
    spec = AblationSpec("shape", window=5, edge_threshold=0.15)
    np.testing.assert_array_equal(apply(spec, img), weaken_shape(img, 5, 0.15))


def test_range_closure_all_operators():
    for seed in range(3):
        img = random_image(9, 9, seed)
        for spec in (AblationSpec("color"), AblationSpec("texture", window=3),
                     AblationSpec("shape", window=3), AblationSpec("topology", window=3, seed=1)):
            validate_image(apply(spec, img))


def test_determinism_across_runs():
    img = random_image(9, 9, 8)
    for spec in (AblationSpec("texture", window=3), AblationSpec("shape", window=5),
                 AblationSpec("topology", window=3, seed=9)):
        a = apply(spec, img)
        b = apply(spec, img)
        np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------- sweep_levels

def test_sweep_levels_basic():
    specs = sweep_levels("texture", [1, 3, 5])
    assert [s.window for s in specs] == [1, 3, 5]
    assert all(s.kind == "texture" for s in specs)


def test_sweep_levels_singleton_and_base():
    base = AblationSpec("shape", window=1, edge_threshold=0.3)
    specs = sweep_levels("shape", [3], base)
    assert specs[0].window == 3 and specs[0].edge_threshold == 0.3


def test_sweep_levels_window_one_is_identity_for_weakeners():
    img = random_image(6, 6, 4)
    for kind in ("texture", "shape"):
        spec = sweep_levels(kind, [1])[0]
        np.testing.assert_array_equal(apply(spec, img), img)


def test_sweep_levels_validation():
    with pytest.raises(ValueError):
        sweep_levels("texture", [])
    with pytest.raises(ValueError):
        sweep_levels("texture", [3, 1])
    with pytest.raises(ValueError):
        sweep_levels("texture", [1, 4])
    with pytest.raises(ValueError):
        sweep_levels("texture", [3, 3])


def test_ablation_spec_validation():
    with pytest.raises(ValueError):
        AblationSpec("nope")
    with pytest.raises(ValueError):
        AblationSpec("texture", window=2)
    with pytest.raises(ValueError):
        AblationSpec("texture", range_radius=0.0)
    with pytest.raises(ValueError):
        AblationSpec("shape", edge_threshold=1.5)
