import numpy as np
import pytest

from biasprobe.imagecore import (
    DecodeError,
    center_crop_to_multiple,
    load_image,
    quantize_unit,
    resize_bilinear,
    save_image,
    validate_image,
)
from biasprobe.rng import uniform_stream


def random_image(h, w, seed=0):
    return uniform_stream(seed, h * w * 3).reshape(h, w, 3).astype(np.float32)


def test_validate_rejects_bad_shapes_and_values():
    with pytest.raises(ValueError):
        validate_image(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        validate_image(np.full((2, 2, 3), 1.5, dtype=np.float32))
    with pytest.raises(ValueError):
        validate_image(np.full((2, 2, 3), np.nan, dtype=np.float32))
    img = np.zeros((2, 2, 3), dtype=np.float32)
    assert validate_image(img) is img


def test_load_maps_bytes_to_unit_interval(tmp_path):
    from PIL import Image
    arr = np.zeros((1, 1, 3), dtype=np.uint8)
    arr[0, 0] = (255, 0, 128)
    p = str(tmp_path / "px.png")
    Image.fromarray(arr, "RGB").save(p)
    img = load_image(p)
    assert img.dtype == np.float32
    np.testing.assert_array_equal(img[0, 0], np.array([1.0, 0.0, 128 / 255], dtype=np.float32))


def test_load_all_zero_png(tmp_path):
    from PIL import Image
    p = str(tmp_path / "z.png")
    Image.fromarray(np.zeros((5, 7, 3), dtype=np.uint8), "RGB").save(p)
    assert not load_image(p).any()


def test_load_grayscale_replicates_channels(tmp_path):
    from PIL import Image
    p = str(tmp_path / "g.png")
    Image.fromarray(np.arange(16, dtype=np.uint8).reshape(4, 4), "L").save(p)
    img = load_image(p)
    assert img.shape == (4, 4, 3)
    np.testing.assert_array_equal(img[:, :, 0], img[:, :, 1])
    np.testing.assert_array_equal(img[:, :, 0], img[:, :, 2])


def test_load_rejects_missing_and_garbage(tmp_path):
    with pytest.raises(DecodeError, match="nope.png"):
        load_image(str(tmp_path / "nope.png"))
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"this is not a png")
    with pytest.raises(DecodeError, match="bad.png"):
        load_image(str(bad))


def test_load_rejects_16bit(tmp_path):
    from PIL import Image
    p = str(tmp_path / "deep.png")
    Image.fromarray((np.arange(16, dtype=np.uint16) * 1000).reshape(4, 4)).save(p)
    with pytest.raises(DecodeError, match="deep.png"):
        load_image(p)


def test_save_byte_mapping(tmp_path):
    from PIL import Image
    img = np.zeros((1, 2, 3), dtype=np.float32)
    img[0, 0] = (1.0, 1.0, 1.0)
    img[0, 1] = (0.5, 0.5, 0.5)
    p = str(tmp_path / "o.png")
    save_image(img, p)
    raw = np.asarray(Image.open(p))
    assert tuple(raw[0, 0]) == (255, 255, 255)
    assert tuple(raw[0, 1]) == (128, 128, 128)  # round(127.5) rounds half up


def test_save_load_roundtrip_on_quantized(tmp_path):
    for seed in range(3):
        img = quantize_unit(random_image(9, 13, seed))
        p = str(tmp_path / f"r{seed}.png")
        save_image(img, p)
        np.testing.assert_array_equal(load_image(p), img)


def test_save_load_within_quantization_bound(tmp_path):
    img = random_image(8, 8, 5)
    p = str(tmp_path / "q.png")
    save_image(img, p)
    back = load_image(p)
    assert np.abs(back.astype(np.float64) - img).max() <= 0.5 / 255 + 1e-9


def test_save_unwritable_path():
    img = np.zeros((2, 2, 3), dtype=np.float32)
    with pytest.raises(OSError):
        save_image(img, "/nonexistent-dir-xyz/out.png")


def test_resize_same_size_is_identity():
    img = random_image(6, 7, 1)
    np.testing.assert_array_equal(resize_bilinear(img, 6, 7), img)


def test_resize_2x2_to_1x1_averages():
    img = np.zeros((2, 2, 3), dtype=np.float32)
    img[:, 1] = 1.0  # values {0, 0, 1, 1}
    out = resize_bilinear(img, 1, 1)
    # half-pixel centers: the single output samples the exact input center
    np.testing.assert_allclose(out[0, 0], [0.5, 0.5, 0.5], atol=1e-7)


def test_resize_constant_stays_constant():
    img = np.full((5, 9, 3), 0.37, dtype=np.float32)
    for oh, ow in ((1, 1), (3, 3), (11, 2), (17, 23)):
        out = resize_bilinear(img, oh, ow)
        assert out.shape == (oh, ow, 3)
        np.testing.assert_allclose(out, 0.37, atol=1e-7)


def test_resize_no_overshoot():
    for seed in range(5):
        img = random_image(7, 5, seed)
        out = resize_bilinear(img, 13, 11)
        assert out.min() >= img.min() - 1e-7
        assert out.max() <= img.max() + 1e-7
        validate_image(np.clip(out, 0, 1))


def test_resize_rejects_bad_dims():
    with pytest.raises(ValueError):
        resize_bilinear(random_image(4, 4), 0, 4)


def test_center_crop_already_multiple():
    img = random_image(224, 224, 2)
    np.testing.assert_array_equal(center_crop_to_multiple(img, 4), img)


def test_center_crop_floors_to_multiple():
    img = random_image(225, 225, 3)
    out = center_crop_to_multiple(img, 4)
    assert out.shape == (224, 224, 3)


def test_center_crop_offset_rule():
    # 10x7 with n=3 -> 9x6; odd trims keep the window biased to bottom/right,
    # verified against explicit offset enumeration
    img = random_image(10, 7, 4)
    out = center_crop_to_multiple(img, 3)
    assert out.shape == (9, 6, 3)
    np.testing.assert_array_equal(out, img[1:10, 1:7])
    # even trim splits evenly: 8 -> 6 removes one row each side
    img2 = random_image(8, 6, 5)
    out2 = center_crop_to_multiple(img2, 3)
    np.testing.assert_array_equal(out2, img2[1:7, :])


def test_center_crop_range_errors():
    img = random_image(4, 4)
    with pytest.raises(ValueError):
        center_crop_to_multiple(img, 0)
    with pytest.raises(ValueError):
        center_crop_to_multiple(img, 5)


def test_range_closure_fuzz(tmp_path):
    for seed in range(8):
        img = random_image(6 + seed, 11 - seed, seed)
        validate_image(resize_bilinear(img, 9, 9).clip(0, 1))
        validate_image(center_crop_to_multiple(img, 2))
        p = str(tmp_path / f"f{seed}.png")
        save_image(img, p)
        validate_image(load_image(p))
