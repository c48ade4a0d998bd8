"""Image container conventions, PNG I/O and bilinear resampling.

Images are plain ``numpy`` arrays of shape ``(H, W, 3)`` holding float64
values in ``[0, 255]``. Nothing here mutates its inputs.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

# 8-bit modes Pillow may hand back for a PNG; everything else (16-bit, float) is refused
_EIGHT_BIT_MODES = {"RGB", "RGBA", "L", "LA", "P", "PA"}


class ImageIOError(OSError):
    """Reading or writing an image file failed."""

    def __init__(self, path, cause):
        self.path = str(path)
        self.cause = cause
        super().__init__(f"{self.path}: {cause}")


def as_image(arr) -> np.ndarray:
    """Validate ``arr`` as an (H, W, 3) image and return it as float64."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image dimensions must be positive, got {img.shape[:2]}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "images") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what} differ in shape: {a.shape} vs {b.shape}")


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Clamp to [0, 255] and round half up."""
    return np.floor(np.clip(img, 0.0, 255.0) + 0.5).astype(np.uint8)


def load_image(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ImageIOError(path, "no such file")
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise ImageIOError(path, f"not a PNG file (detected {im.format})")
            if im.mode not in _EIGHT_BIT_MODES:
                raise ImageIOError(path, f"unsupported bit depth / mode {im.mode!r}")
            im.load()
            rgb = im.convert("RGB")
    except ImageIOError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageIOError(path, f"cannot decode PNG ({exc})") from exc
    return np.asarray(rgb, dtype=np.float64)


def save_image(img, path) -> None:
    """Write ``img`` as an 8-bit RGB PNG after clamping and half-up rounding."""
    data = to_uint8(as_image(img))
    path = Path(path)
    try:
        # fixed encoder settings so identical pixels always give identical bytes
        Image.fromarray(data, mode="RGB").save(path, format="PNG", compress_level=6)
    except (OSError, ValueError) as exc:
        raise ImageIOError(path, f"cannot write PNG ({exc})") from exc


def _axis_weights(n_in: int, n_out: int):
    scale = n_in / n_out
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(img, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centre alignment, no antialiasing.

    Source coordinates are ``(dst + 0.5) * in / out - 0.5`` clamped to the
    image, and each channel is interpolated independently.
    """
    img = as_image(img)
    if int(out_h) != out_h or int(out_w) != out_w or out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive integers, got {out_h}x{out_w}")
    h, w, _ = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()

    lo, hi, f = _axis_weights(h, out_h)
    top, bot = img[lo], img[hi]
    rows = top + f[:, None, None] * (bot - top)

    lo, hi, f = _axis_weights(w, out_w)
    left, right = rows[:, lo], rows[:, hi]
    out = left + f[None, :, None] * (right - left)

    # a + f*(b - a) can overshoot by one ulp; keep the range guarantee exact
    lo_val = img.min(axis=(0, 1))
    hi_val = img.max(axis=(0, 1))
    return np.clip(out, lo_val, hi_val)


def degrade(img, scale_percent: int = 50) -> np.ndarray:
    """Downscale to ``scale_percent`` of the linear size, then back up."""
    img = as_image(img)
    if not 1 <= scale_percent <= 100:
        raise ValueError(f"scale_percent must be in [1, 100], got {scale_percent}")
    h, w, _ = img.shape
    small_h = (h * scale_percent + 50) // 100
    small_w = (w * scale_percent + 50) // 100
    if small_h < 1 or small_w < 1:
        raise ValueError(
            f"{scale_percent}% of {h}x{w} rounds to an empty {small_h}x{small_w} image"
        )
    small = resize_bilinear(img, small_h, small_w)
    return resize_bilinear(small, h, w)


def list_pngs(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ImageIOError(directory, "not a directory")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png" and p.is_file())


def ensure_parent(path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
