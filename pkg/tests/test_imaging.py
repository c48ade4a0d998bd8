import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from fgsr.imaging import ImageIOError, degrade, load_image, resize_bilinear, save_image

from . import oracles
from .pngref import read_png


def test_load_black_pixel(tmp_path):
    p = tmp_path / "black.png"
    Image.fromarray(np.zeros((1, 1, 3), np.uint8)).save(p)
    img = load_image(p)
    assert img.shape == (1, 1, 3)
    assert img.ravel().tolist() == [0.0, 0.0, 0.0]


def test_save_load_roundtrip_2x2(tmp_path):
    data = np.array([[[0, 10, 20], [30, 40, 50]], [[60, 70, 80], [255, 254, 1]]], float)
    save_image(data, tmp_path / "a.png")
    assert np.array_equal(load_image(tmp_path / "a.png"), data)


def test_rgba_alpha_dropped(tmp_path):
    rgba = np.zeros((2, 3, 4), np.uint8)
    rgba[..., 0] = 200
    rgba[..., 3] = 17
    Image.fromarray(rgba, "RGBA").save(tmp_path / "x.png")
    img = load_image(tmp_path / "x.png")
    assert img.shape == (2, 3, 3)
    assert np.all(img[..., 0] == 200) and np.all(img[..., 1:] == 0)


def test_cross_decode_against_independent_reader(tmp_path):
    rng = np.random.default_rng(3)
    grid = rng.integers(0, 256, size=(7, 9, 3)).astype(np.uint8)
    # a gradient makes the encoder pick non-trivial scanline filters
    grid[:, :, 0] = np.arange(9)[None, :] * 28
    p = tmp_path / "grid.png"
    Image.fromarray(grid).save(p, optimize=True)
    w, h, rows = read_png(p)
    assert (w, h) == (9, 7)
    assert np.array_equal(load_image(p), np.array(rows, dtype=float))
    # and the files we write decode identically with the reference reader
    save_image(grid.astype(float), tmp_path / "ours.png")
    _, _, rows2 = read_png(tmp_path / "ours.png")
    assert np.array_equal(np.array(rows2), grid)


def test_saturation(tmp_path):
    save_image(np.full((3, 3, 3), 255.0), tmp_path / "w.png")
    assert np.all(load_image(tmp_path / "w.png") == 255)


@pytest.mark.parametrize("value,stored", [(127.5, 128), (0.5, 1), (254.49, 254), (-3.0, 0), (300.0, 255)])
def test_round_half_up_and_clamp(tmp_path, value, stored):
    save_image(np.full((1, 1, 3), value), tmp_path / "v.png")
    assert np.all(load_image(tmp_path / "v.png") == stored)


def test_random_roundtrip_100_images(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(100):
        h, w = rng.integers(1, 12, size=2)
        x = rng.uniform(-20, 275, size=(h, w, 3))
        p = tmp_path / f"{i}.png"
        save_image(x, p)
        assert np.array_equal(load_image(p), np.floor(np.clip(x, 0, 255) + 0.5))


def test_load_errors(tmp_path):
    with pytest.raises(ImageIOError, match="no such file"):
        load_image(tmp_path / "missing.png")
    junk = tmp_path / "junk.png"
    junk.write_bytes(b"\x89PNG\r\n\x1a\nnot really")
    with pytest.raises(ImageIOError, match="junk.png"):
        load_image(junk)
    deep = tmp_path / "deep.png"
    Image.fromarray(np.zeros((2, 2), np.uint16) + 1000).save(deep)
    with pytest.raises(ImageIOError, match="bit depth"):
        load_image(deep)


def test_save_unwritable(tmp_path):
    with pytest.raises(ImageIOError):
        save_image(np.zeros((2, 2, 3)), tmp_path / "no" / "such" / "dir" / "x.png")


def test_resize_identity():
    x = np.random.default_rng(1).uniform(0, 255, size=(5, 7, 3))
    assert np.array_equal(resize_bilinear(x, 5, 7), x)


@pytest.mark.parametrize("size", [(1, 1), (3, 8), (9, 2), (16, 16)])
def test_resize_constant(size):
    x = np.full((6, 5, 3), 42.7)
    assert np.array_equal(resize_bilinear(x, *size), np.full(size + (3,), 42.7))


def test_resize_ramp_matches_scalar_oracle():
    ramp = np.arange(16, dtype=float).reshape(4, 4)
    x = np.stack([ramp * 10, ramp[::-1] * 3, ramp.T], axis=-1)
    for size in [(2, 2), (3, 5), (7, 6), (8, 8)]:
        np.testing.assert_allclose(resize_bilinear(x, *size), oracles.bilinear_resize(x, *size),
                                   rtol=0, atol=1e-12)


def test_resize_rejects_bad_size():
    with pytest.raises(ValueError):
        resize_bilinear(np.zeros((2, 2, 3)), 0, 3)


images = arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9), st.just(3)),
                elements=st.floats(0, 255))


@settings(max_examples=60, deadline=None)
@given(images, st.integers(1, 12), st.integers(1, 12))
def test_resize_preserves_channel_range(x, oh, ow):
    y = resize_bilinear(x, oh, ow)
    assert np.all(y >= x.min(axis=(0, 1))) and np.all(y <= x.max(axis=(0, 1)))


@settings(max_examples=40, deadline=None)
@given(images, st.integers(1, 100))
def test_degrade_keeps_dimensions(x, p):
    if (x.shape[0] * p + 50) // 100 < 1 or (x.shape[1] * p + 50) // 100 < 1:
        with pytest.raises(ValueError):
            degrade(x, p)
    else:
        assert degrade(x, p).shape == x.shape


def test_degrade_identity_and_constant():
    x = np.random.default_rng(2).uniform(0, 255, size=(8, 6, 3))
    assert np.array_equal(degrade(x, 100), x)
    c = np.full((8, 8, 3), 99.0)
    assert np.array_equal(degrade(c, 50), c)


def test_degrade_checkerboard_matches_composed_oracle():
    board = ((np.indices((8, 8)).sum(axis=0) % 2) * 255.0)
    x = np.stack([board, 255 - board, board * 0.5], axis=-1)
    expected = oracles.bilinear_resize(oracles.bilinear_resize(x, 4, 4), 8, 8)
    np.testing.assert_allclose(degrade(x, 50), expected, atol=1e-12)


def test_degrade_rounds_intermediate_size():
    # 5 * 50% = 2.5 -> 3 (half up)
    x = np.random.default_rng(0).uniform(0, 255, size=(5, 5, 3))
    expected = resize_bilinear(resize_bilinear(x, 3, 3), 5, 5)
    assert np.array_equal(degrade(x, 50), expected)


def test_degrade_errors():
    with pytest.raises(ValueError):
        degrade(np.zeros((4, 4, 3)), 0)
    with pytest.raises(ValueError, match="rounds to an empty"):
        degrade(np.zeros((1, 4, 3)), 10)
