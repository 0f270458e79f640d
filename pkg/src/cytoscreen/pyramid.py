"""Three-layer image pyramid, exact 800x600 tiling, and tile <-> slide mapping."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .core import SLIDE, BBox, ContractViolation, GroundTruthBox, tile_space
from .imaging import resize_bilinear

DEFAULT_LAYERS = ((4000, 3000), (1600, 1200), (800, 600))
DEFAULT_TILE = (800, 600)


@dataclass(frozen=True)
class PyramidSpec:
    layer_sizes: tuple[tuple[int, int], ...] = DEFAULT_LAYERS
    tile_size: tuple[int, int] = DEFAULT_TILE
    min_clip_area_ratio: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(tuple(int(v) for v in s) for s in self.layer_sizes))
        object.__setattr__(self, "tile_size", tuple(int(v) for v in self.tile_size))
        tw, th = self.tile_size
        if not self.layer_sizes:
            raise ValueError("pyramid needs at least one layer")
        if tw <= 0 or th <= 0:
            raise ValueError(f"bad tile size {self.tile_size}")
        for w, h in self.layer_sizes:
            if w % tw or h % th:
                raise ValueError(f"layer {w}x{h} is not divisible by tile {tw}x{th}")
        if not 0.0 < self.min_clip_area_ratio <= 1.0:
            raise ValueError("min_clip_area_ratio must lie in (0, 1]")

    @property
    def slide_size(self) -> tuple[int, int]:
        return self.layer_sizes[0]

    def grid(self, layer_index: int) -> tuple[int, int]:
        """(rows, cols) of the tile grid on one layer."""
        w, h = self.layer_sizes[layer_index]
        return h // self.tile_size[1], w // self.tile_size[0]

    def scale(self, layer_index: int) -> Fraction:
        return Fraction(self.layer_sizes[0][0], self.layer_sizes[layer_index][0])

    @property
    def num_tiles(self) -> int:
        return sum(r * c for r, c in (self.grid(i) for i in range(len(self.layer_sizes))))

    def tiles(self) -> list["TileMeta"]:
        """All tile records in canonical order: layer-major, then row-major."""
        out = []
        for layer in range(len(self.layer_sizes)):
            out.extend(self.layer_tiles(layer))
        return out

    def layer_tiles(self, layer_index: int) -> list["TileMeta"]:
        first = sum(r * c for r, c in (self.grid(i) for i in range(layer_index)))
        rows, cols = self.grid(layer_index)
        tw, th = self.tile_size
        s = self.scale(layer_index)
        return [
            TileMeta(
                tile_id=first + r * cols + c,
                layer_index=layer_index,
                grid_row=r,
                grid_col=c,
                origin=(c * tw, r * th),
                size=(tw, th),
                scale_num=s.numerator,
                scale_den=s.denominator,
            )
            for r in range(rows)
            for c in range(cols)
        ]


@dataclass(frozen=True)
class TileMeta:
    tile_id: int
    layer_index: int
    grid_row: int
    grid_col: int
    origin: tuple[int, int]
    size: tuple[int, int]
    # slide-space / layer-space scale kept as an exact ratio
    scale_num: int
    scale_den: int

    @property
    def scale_to_slide(self) -> float:
        return self.scale_num / self.scale_den

    @property
    def space(self) -> str:
        return tile_space(self.tile_id)

    def to_dict(self) -> dict:
        return {
            "tile_id": self.tile_id,
            "layer_index": self.layer_index,
            "grid_row": self.grid_row,
            "grid_col": self.grid_col,
            "origin": list(self.origin),
            "size": list(self.size),
            "scale_to_slide": self.scale_to_slide,
        }


def build_pyramid(image: np.ndarray, spec: PyramidSpec = PyramidSpec()) -> list[np.ndarray]:
    """Resize ``image`` to every layer size of ``spec``.

    Layer one is a stretch of the input to the first layer size; each further
    layer is resized from layer one.
    """
    if image.ndim < 2 or image.shape[0] == 0 or image.shape[1] == 0:
        raise ValueError(f"cannot build a pyramid from an empty raster {image.shape}")
    w0, h0 = spec.layer_sizes[0]
    base = resize_bilinear(image, w0, h0)
    return [base] + [resize_bilinear(base, w, h) for w, h in spec.layer_sizes[1:]]


def tile_layer(layer: np.ndarray, spec: PyramidSpec, layer_index: int) -> list[tuple[np.ndarray, TileMeta]]:
    expect = spec.layer_sizes[layer_index]
    h, w = layer.shape[:2]
    if (w, h) != expect:
        raise ValueError(f"layer {layer_index} is {w}x{h}, expected {expect[0]}x{expect[1]}")
    tw, th = spec.tile_size
    out = []
    for meta in spec.layer_tiles(layer_index):
        x, y = meta.origin
        out.append((layer[y : y + th, x : x + tw], meta))
    return out


def tile_pyramid(layers: Sequence[np.ndarray], spec: PyramidSpec = PyramidSpec()) -> list[tuple[np.ndarray, TileMeta]]:
    if len(layers) != len(spec.layer_sizes):
        raise ValueError(f"expected {len(spec.layer_sizes)} layers, got {len(layers)}")
    out = []
    for i, layer in enumerate(layers):
        out.extend(tile_layer(layer, spec, i))
    return out


def tile_to_slide(box: BBox, meta: TileMeta) -> BBox:
    if box.space != meta.space:
        raise ContractViolation(f"box in {box.space!r} does not belong to {meta.space!r}")
    n, d = meta.scale_num, meta.scale_den
    ox, oy = meta.origin
    return BBox(
        (box.x + ox) * n / d,
        (box.y + oy) * n / d,
        box.w * n / d,
        box.h * n / d,
        SLIDE,
    )


def slide_to_tile(box: BBox, meta: TileMeta) -> BBox:
    if box.space != SLIDE:
        raise ContractViolation(f"expected a slide-space box, got {box.space!r}")
    n, d = meta.scale_num, meta.scale_den
    ox, oy = meta.origin
    return BBox(
        box.x * d / n - ox,
        box.y * d / n - oy,
        box.w * d / n,
        box.h * d / n,
        meta.space,
    )


def project_gt_to_tiles(
    gts: Iterable[GroundTruthBox],
    tiles: Sequence[TileMeta],
    spec: PyramidSpec = PyramidSpec(),
    min_ratio: float | None = None,
) -> dict[int, list[GroundTruthBox]]:
    """Clip slide-space ground truth into every tile it overlaps.

    A clipped box is kept when its area is at least ``min_ratio`` (default
    ``spec.min_clip_area_ratio``) of the unclipped projection. Every tile id
    is present in the result, possibly with an empty list.
    """
    ratio = spec.min_clip_area_ratio if min_ratio is None else min_ratio
    out: dict[int, list[GroundTruthBox]] = {t.tile_id: [] for t in tiles}
    gts = list(gts)
    for meta in tiles:
        tw, th = meta.size
        bucket = out[meta.tile_id]
        for gt in gts:
            local = slide_to_tile(gt.bbox, meta)
            if local.area <= 0:
                continue
            clipped = local.clip(0, 0, tw, th)
            if clipped is None:
                continue
            # small tolerance so a box that is fully inside never loses to rounding
            if clipped.area >= ratio * local.area * (1 - 1e-12):
                bucket.append(gt.with_bbox(clipped))
    return out


def tile_space_dims(boxes: np.ndarray, spec: PyramidSpec = PyramidSpec()) -> np.ndarray:
    """(w, h) of every kept tile-space clip of slide boxes given as an (N, 4) xywh array.

    Vectorized counterpart of :func:`project_gt_to_tiles` for large box sets.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    out = []
    for meta in spec.tiles():
        n, d = meta.scale_num, meta.scale_den
        ox, oy = meta.origin
        tw, th = meta.size
        x = boxes[:, 0] * d / n - ox
        y = boxes[:, 1] * d / n - oy
        w = boxes[:, 2] * d / n
        h = boxes[:, 3] * d / n
        cw = np.minimum(x + w, tw) - np.maximum(x, 0)
        ch = np.minimum(y + h, th) - np.maximum(y, 0)
        area = w * h
        keep = (cw > 0) & (ch > 0) & (area > 0)
        keep &= cw * ch >= spec.min_clip_area_ratio * area * (1 - 1e-12)
        out.append(np.stack([cw[keep], ch[keep]], axis=1))
    return np.concatenate(out) if out else np.empty((0, 2))
