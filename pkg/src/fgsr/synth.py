"""Procedural desk-scale image sets standing in for DIV2K.

Each image is a smooth colour gradient with random ellipses, rectangles and
stripe patches on top: hard edges for the degrade step to blur, large flat
areas like a portrait background. A foreground mask (the union of the
ellipses) is written next to each image using the ``<stem>.mask.png``
naming convention.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import save_image


def random_scene(rng: np.random.Generator, size: int = 64):
    """Return ``(image, foreground_mask)`` for one scene."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / max(size - 1, 1)
    c0, c1, c2 = rng.uniform(30, 225, size=(3, 3))
    img = c0 + (c1 - c0) * xx[..., None] + (c2 - c0) * yy[..., None] * 0.5
    fg = np.zeros((size, size), dtype=bool)

    for _ in range(rng.integers(2, 5)):
        color = rng.uniform(0, 255, size=3)
        kind = rng.integers(0, 3)
        if kind == 0:
            x0, y0 = rng.uniform(0, size - 8, size=2)
            w, h = rng.uniform(6, size / 2, size=2)
            sel = (xx * size >= x0) & (xx * size < x0 + w) & (yy * size >= y0) & (yy * size < y0 + h)
        elif kind == 1:
            cy, cx = rng.uniform(size * 0.2, size * 0.8, size=2)
            ry, rx = rng.uniform(size * 0.08, size * 0.3, size=2)
            sel = ((yy * size - cy) / ry) ** 2 + ((xx * size - cx) / rx) ** 2 <= 1.0
            fg |= sel
        else:
            x0, y0 = rng.uniform(0, size / 2, size=2)
            period = rng.uniform(3, 8)
            inside = (xx * size >= x0) & (xx * size < x0 + size / 3) & (yy * size >= y0) & (yy * size < y0 + size / 3)
            sel = inside & (np.sin(2 * np.pi * (xx + yy) * size / period) > 0)
        img[sel] = color

    img += rng.normal(0, 2.0, size=img.shape)
    return np.clip(img, 0, 255), fg


def make_desk_dataset(out_dir, count: int, size: int = 64, seed: int = 0,
                      with_masks: bool = True) -> list[Path]:
    """Write ``count`` scenes as ``img_0000.png`` ... into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        img, fg = random_scene(rng, size)
        path = out_dir / f"img_{i:04d}.png"
        save_image(img, path)
        if with_masks:
            Image.fromarray(fg.astype(np.uint8) * 255, mode="L").save(
                out_dir / f"img_{i:04d}.mask.png", format="PNG"
            )
        paths.append(path)
    return paths
