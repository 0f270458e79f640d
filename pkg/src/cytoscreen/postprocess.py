"""Greedy NMS, cross-layer merging into slide space, score thresholding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import ContractViolation, Detection, iou
from .pyramid import TileMeta, tile_to_slide


@dataclass(frozen=True)
class NmsConfig:
    iou_threshold: float = 0.45
    class_aware: bool = True
    score_floor: float = 0.05

    def __post_init__(self):
        for name in ("iou_threshold", "score_floor"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def _check_single_space(dets: Sequence[Detection]) -> None:
    spaces = {d.space for d in dets}
    if len(spaces) > 1:
        raise ContractViolation(f"nms over mixed coordinate spaces: {sorted(spaces)}")


def nms(dets: Sequence[Detection], cfg: NmsConfig = NmsConfig()) -> list[Detection]:
    """Greedy suppression in descending score order; equal scores keep input order."""
    dets = list(dets)
    _check_single_space(dets)
    order = sorted(
        (i for i, d in enumerate(dets) if d.final_score >= cfg.score_floor),
        key=lambda i: -dets[i].final_score,
    )
    kept: list[Detection] = []
    for i in order:
        cand = dets[i]
        suppressed = any(
            (not cfg.class_aware or k.category == cand.category)
            and iou(k.bbox, cand.bbox) > cfg.iou_threshold
            for k in kept
        )
        if not suppressed:
            kept.append(cand)
    return kept


def merge_pyramid(
    per_tile: Iterable[tuple[TileMeta, Sequence[Detection]]],
    cfg: NmsConfig = NmsConfig(),
) -> list[Detection]:
    """Project per-tile detections into slide space and run one global NMS.

    Tiles are put in tile-id order before projection so the result does not
    depend on the order in which tiles were processed.
    """
    groups = sorted(per_tile, key=lambda item: item[0].tile_id)
    projected: list[Detection] = []
    for meta, dets in groups:
        for d in dets:
            if d.space != meta.space:
                raise ContractViolation(
                    f"detection in {d.space!r} listed under tile {meta.tile_id}"
                )
            projected.append(d.with_bbox(tile_to_slide(d.bbox, meta)))
    return nms(projected, cfg)


def threshold(dets: Iterable[Detection], tau: float) -> list[Detection]:
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"score threshold must lie in [0, 1], got {tau}")
    return [d for d in dets if d.final_score >= tau]
