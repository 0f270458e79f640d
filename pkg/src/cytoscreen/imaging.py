"""Raster helpers: bilinear resize, raster I/O and box overlays."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

# Box colors for overlays, one per category in taxonomy order.
CATEGORY_COLORS: tuple[tuple[int, int, int], ...] = (
    (255, 0, 0),  # normal: red
    (255, 165, 0),  # ascus: orange
    (255, 255, 0),  # asch: yellow
    (204, 255, 0),  # lsil: fluorescent green
    (0, 160, 0),  # hsil: green
    (0, 191, 255),  # agc: lake blue
    (0, 0, 255),  # ade: blue
    (128, 0, 128),  # vag: purple
    (227, 11, 92),  # mon: rose red
    (255, 192, 203),  # dys: pink
)


def _axis_weights(src: int, dst: int):
    # half-pixel centers: sample at (i + 0.5) * src/dst - 0.5
    pos = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0.0, src - 1)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, src - 1)
    frac = pos - i0
    return i0, i1, frac


def resize_bilinear(image: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resize of an HxW or HxWxC raster; same dtype out."""
    if image.ndim < 2 or image.shape[0] == 0 or image.shape[1] == 0:
        raise ValueError(f"cannot resize an empty raster of shape {image.shape}")
    if width <= 0 or height <= 0:
        raise ValueError(f"target size must be positive, got {width}x{height}")
    h, w = image.shape[:2]
    if (w, h) == (width, height):
        return image.copy()

    src = image.astype(np.float32)
    r0, r1, fy = _axis_weights(h, height)
    fy = fy.astype(np.float32).reshape((-1,) + (1,) * (src.ndim - 1))
    rows = src[r0] * (1 - fy) + src[r1] * fy

    c0, c1, fx = _axis_weights(w, width)
    fx = fx.astype(np.float32).reshape((1, -1) + (1,) * (src.ndim - 2))
    out = rows[:, c0] * (1 - fx) + rows[:, c1] * fx

    if np.issubdtype(image.dtype, np.integer):
        info = np.iinfo(image.dtype)
        out = np.clip(np.rint(out), info.min, info.max)
    return out.astype(image.dtype)


def read_raster(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def write_raster(path: str | Path, image: np.ndarray) -> None:
    path = Path(path)
    im = Image.fromarray(np.ascontiguousarray(image))
    if path.suffix.lower() == ".png":
        im.save(path, compress_level=1)
    else:
        im.save(path)


def draw_overlay(image: np.ndarray, boxes, width: int = 4) -> np.ndarray:
    """Return a copy of ``image`` with (BBox, Category) pairs outlined in category colors."""
    im = Image.fromarray(np.ascontiguousarray(image))
    draw = ImageDraw.Draw(im)
    for bbox, category in boxes:
        draw.rectangle(
            [bbox.x, bbox.y, bbox.x2, bbox.y2],
            outline=CATEGORY_COLORS[int(category)],
            width=width,
        )
    return np.asarray(im)
