"""JSONL wire formats for detections, ground truth and slide labels."""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import (
    NUM_CLASSES,
    SLIDE,
    BBox,
    Category,
    ContractViolation,
    Detection,
    GroundTruthBox,
    tile_space,
)

_TILE_SPACE = re.compile(r"tile\((\d+)\)")


class SchemaError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def _space_of(rec: dict) -> str:
    tile = rec.get("tile")
    if tile is None:
        return SLIDE
    if not isinstance(tile, int) or isinstance(tile, bool) or tile < 0:
        raise ValueError(f"tile must be a non-negative integer, got {tile!r}")
    return tile_space(tile)


def _tile_of(space: str):
    if space == SLIDE:
        return None
    m = _TILE_SPACE.fullmatch(space)
    if not m:
        raise ContractViolation(f"cannot serialize a box in space {space!r}")
    return int(m.group(1))


def _bbox(rec: dict) -> BBox:
    raw = rec["bbox"]
    if not isinstance(raw, list) or len(raw) != 4:
        raise ValueError("bbox must be a list [x, y, w, h]")
    x, y, w, h = (_number(v, "bbox entry") for v in raw)
    return BBox(x, y, w, h, _space_of(rec))


def _number(v, what: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"{what} must be a number, got {v!r}")
    return float(v)


def _image_id(rec: dict) -> str:
    image_id = rec["image_id"]
    if not isinstance(image_id, str):
        raise ValueError(f"image_id must be a string, got {image_id!r}")
    return image_id


def detection_from_record(rec: dict) -> tuple[str, Detection]:
    scores = rec.get("scores")
    if scores is not None:
        if not isinstance(scores, list) or len(scores) != NUM_CLASSES:
            raise ValueError(f"scores must be a list of {NUM_CLASSES} numbers")
        scores = tuple(_number(s, "class score") for s in scores)
    det = Detection(
        bbox=_bbox(rec),
        objectness=_number(rec["objectness"], "objectness"),
        category=Category.from_name(rec["category"]),
        final_score=_number(rec["score"], "score"),
        class_scores=scores,
        relabeled=bool(rec.get("relabeled", False)),
    )
    return _image_id(rec), det


def detection_to_record(image_id: str, det: Detection) -> dict:
    rec = {
        "image_id": image_id,
        "bbox": det.bbox.as_list(),
        "category": det.category.label,
        "objectness": det.objectness,
        "score": det.final_score,
    }
    if det.class_scores is not None:
        rec["scores"] = list(det.class_scores)
    if det.relabeled:
        rec["relabeled"] = True
    tile = _tile_of(det.space)
    if tile is not None:
        rec["tile"] = tile
    return rec


def gt_from_record(rec: dict) -> GroundTruthBox:
    image_id = _image_id(rec)
    return GroundTruthBox(_bbox(rec), Category.from_name(rec["category"]), image_id)


def gt_to_record(gt: GroundTruthBox) -> dict:
    rec = {"image_id": gt.source_image_id, "bbox": gt.bbox.as_list(), "category": gt.category.label}
    tile = _tile_of(gt.bbox.space)
    if tile is not None:
        rec["tile"] = tile
    return rec


def _iter_records(path):
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(path, n, f"invalid JSON: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise SchemaError(path, n, "record must be a JSON object")
            yield n, rec


def read_detections(path) -> dict[str, list[Detection]]:
    out: dict[str, list[Detection]] = {}
    for n, rec in _iter_records(path):
        try:
            image_id, det = detection_from_record(rec)
        except KeyError as exc:
            raise SchemaError(path, n, f"missing field {exc.args[0]!r}") from None
        except ValueError as exc:
            raise SchemaError(path, n, str(exc)) from None
        out.setdefault(image_id, []).append(det)
    return out


def read_ground_truth(path) -> dict[str, list[GroundTruthBox]]:
    out: dict[str, list[GroundTruthBox]] = {}
    for n, rec in _iter_records(path):
        try:
            gt = gt_from_record(rec)
        except KeyError as exc:
            raise SchemaError(path, n, f"missing field {exc.args[0]!r}") from None
        except ValueError as exc:
            raise SchemaError(path, n, str(exc)) from None
        out.setdefault(gt.source_image_id, []).append(gt)
    return out


def read_labels(path) -> dict[str, bool]:
    """Slide labels, one ``{"image_id": ..., "label": "positive"|"negative"}`` per line."""
    out: dict[str, bool] = {}
    for n, rec in _iter_records(path):
        label = rec.get("label")
        if label not in ("positive", "negative") or not isinstance(rec.get("image_id"), str):
            raise SchemaError(path, n, "expected image_id and label positive|negative")
        out[rec["image_id"]] = label == "positive"
    return out


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records)


def write_detections(path, dets_by_image: Mapping[str, Sequence[Detection]]) -> None:
    recs = (detection_to_record(i, d) for i, dets in dets_by_image.items() for d in dets)
    Path(path).write_text(dumps_jsonl(recs), encoding="utf-8")


def write_ground_truth(path, gts_by_image: Mapping[str, Sequence[GroundTruthBox]]) -> None:
    recs = (gt_to_record(g) for gts in gts_by_image.values() for g in gts)
    Path(path).write_text(dumps_jsonl(recs), encoding="utf-8")


def write_labels(path, labels: Mapping[str, bool]) -> None:
    recs = ({"image_id": i, "label": "positive" if y else "negative"} for i, y in labels.items())
    Path(path).write_text(dumps_jsonl(recs), encoding="utf-8")


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_json(path, obj: dict) -> None:
    Path(path).write_text(dumps_report(obj), encoding="utf-8")
