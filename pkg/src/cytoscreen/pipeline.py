"""End-to-end composition: tile -> detect -> merge -> refine -> evaluate/triage."""

from __future__ import annotations

import copy
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .cascade import CropConfig, HardClassifier, refine
from .core import NUM_CLASSES, SLIDE, Category, Detection, GroundTruthBox
from .evaluator import EvalConfig, EvalReport, evaluate, slide_label, triage, triage_metrics
from .fixtures import MockDetector, NoiseSpec, classifier_from_config, swap_confusion
from .postprocess import NmsConfig, merge_pyramid, nms
from .pyramid import PyramidSpec, build_pyramid, project_gt_to_tiles, tile_pyramid

DEFAULT_CONFIG: dict[str, Any] = {
    "seed": 0,
    "threads": 1,
    "input": {"manifest": "manifest.json", "gt": None, "labels": None},
    "detector": {
        "source": "mock",
        "detections": None,
        "visibility": None,
        "noise": {
            "jitter_sigma": 0.0,
            "miss_rate": 0.0,
            "false_positive_rate": 0.0,
            "confusion": None,
            "swap": None,
            "score_model": "perfect",
            "seed": None,
        },
    },
    "pyramid": {
        "layer_sizes": [[4000, 3000], [1600, 1200], [800, 600]],
        "tile_size": [800, 600],
        "min_clip_area_ratio": 0.3,
    },
    "nms": {"iou_threshold": 0.45, "class_aware": True, "score_floor": 0.05},
    "cascade": {"enabled": True, "classifier": {"type": "identity"}, "context_pad": 0.1, "output_edge": 299},
    "eval": {"iou_threshold": 0.5, "credit": False, "granularity": "slide"},
    "triage": {"tau": 0.5},
    "output": {"dir": "out", "overlays": False},
}


def merge_config(base: Mapping, override: Mapping) -> dict:
    out = copy.deepcopy(dict(base))
    for k, v in override.items():
        if k not in out:
            raise ValueError(f"unknown config key {k!r}")
        if isinstance(out[k], dict) and isinstance(v, Mapping):
            if k in ("classifier",):
                out[k] = dict(v)
            else:
                out[k] = merge_config(out[k], v)
        else:
            out[k] = v
    return out


@dataclass(frozen=True)
class Settings:
    """Validated, typed view of a pipeline config dict."""

    seed: int
    threads: int
    pyramid: PyramidSpec
    nms: NmsConfig
    noise: NoiseSpec
    visibility: Optional[float]
    crop: CropConfig
    cascade: bool
    classifier_cfg: dict
    eval: EvalConfig
    tau: float

    @classmethod
    def from_config(cls, cfg: Mapping) -> "Settings":
        cfg = merge_config(DEFAULT_CONFIG, cfg)
        seed = int(cfg["seed"])
        n = cfg["detector"]["noise"]
        confusion = np.eye(NUM_CLASSES)
        if n.get("confusion") is not None:
            confusion = np.asarray(n["confusion"], dtype=np.float64)
        elif n.get("swap"):
            a, b = (Category.from_name(s) for s in n["swap"])
            confusion = swap_confusion(a, b)
        noise = NoiseSpec(
            jitter_sigma=float(n["jitter_sigma"]),
            miss_rate=float(n["miss_rate"]),
            false_positive_rate=float(n["false_positive_rate"]),
            confusion=confusion,
            score_model=n["score_model"],
            seed=seed if n.get("seed") is None else int(n["seed"]),
        )
        p = cfg["pyramid"]
        e = cfg["eval"]
        credit = e["credit"]
        if isinstance(credit, str):
            credit = {"on": True, "off": False}[credit]
        tau = float(cfg["triage"]["tau"])
        if not 0.0 <= tau <= 1.0:
            raise ValueError("triage.tau must lie in [0, 1]")
        return cls(
            seed=seed,
            threads=max(1, int(cfg["threads"])),
            pyramid=PyramidSpec(
                tuple(tuple(s) for s in p["layer_sizes"]), tuple(p["tile_size"]), float(p["min_clip_area_ratio"])
            ),
            nms=NmsConfig(**cfg["nms"]),
            noise=noise,
            visibility=None if cfg["detector"]["visibility"] is None else float(cfg["detector"]["visibility"]),
            crop=CropConfig(float(cfg["cascade"]["context_pad"]), int(cfg["cascade"]["output_edge"])),
            cascade=bool(cfg["cascade"]["enabled"]),
            classifier_cfg=dict(cfg["cascade"]["classifier"]),
            eval=EvalConfig(float(e["iou_threshold"]), bool(credit), e["granularity"]),
            tau=tau,
        )


@dataclass
class SlideResult:
    image_id: str
    detections: list[Detection]  # after merge (slide space) or per tile
    refined: list[Detection]
    tile_ids: list[str]
    tile_detections: dict[str, list[Detection]]
    tile_refined: dict[str, list[Detection]]
    tile_gts: dict[str, list[GroundTruthBox]]


@dataclass
class PipelineResult:
    slide_ids: list[str]
    report: EvalReport
    pre_cascade: EvalReport
    detections: dict[str, list[Detection]]
    predictions: dict[str, bool]
    labels: dict[str, bool]

    def to_dict(self) -> dict:
        out = self.report.to_dict()
        out["pre_cascade"] = {
            "map": self.pre_cascade.map,
            "ap": {c.label: ap for c, ap in self.pre_cascade.ap.items()},
        }
        out["slides"] = [
            {"image_id": s, "prediction": self.predictions[s], "label": self.labels[s]} for s in self.slide_ids
        ]
        return out


def tile_key(image_id: str, tile_id: int) -> str:
    return f"{image_id}#t{tile_id:02d}"


def _file_detector(dets: Sequence[Detection]):
    by_space: dict[str, list[Detection]] = {}
    for d in dets:
        by_space.setdefault(d.space, []).append(d)
    return lambda tile, meta: list(by_space.get(meta.space, ()))


def process_slide(
    index: int,
    image_id: str,
    raster: np.ndarray,
    gts: Sequence[GroundTruthBox],
    settings: Settings,
    classifier: Optional[HardClassifier] = None,
    file_dets: Optional[Sequence[Detection]] = None,
) -> SlideResult:
    spec = settings.pyramid
    layers = build_pyramid(raster, spec)
    tiles = tile_pyramid(layers, spec)
    slide_raster = layers[0]

    if file_dets is None:
        # a zero-noise mock should reproduce exactly the ground truth it is scored against:
        # whole cells for slide-level scoring, the kept tile clips for tile-level scoring
        visibility = settings.visibility
        if visibility is None:
            visibility = spec.min_clip_area_ratio if settings.eval.granularity == "tile" else 1.0
        detect = MockDetector(gts, settings.noise, spec, visibility, index).detect
        extra: list[Detection] = []
    else:
        detect = _file_detector(file_dets)
        extra = [d for d in file_dets if d.space == SLIDE]
        known = {m.space for _, m in tiles} | {SLIDE}
        unknown = sorted({d.space for d in file_dets} - known)
        if unknown:
            raise ValueError(f"{image_id}: detections reference unknown tiles {unknown}")

    per_tile = [(meta, detect(tile, meta)) for tile, meta in tiles]
    result = SlideResult(image_id, [], [], [], {}, {}, {})

    if settings.eval.granularity == "tile":
        tile_gts = project_gt_to_tiles(gts, [m for _, m in tiles], spec)
        for (tile, meta), (_, dets) in zip(tiles, per_tile):
            key = tile_key(image_id, meta.tile_id)
            kept = nms(dets, settings.nms)
            result.tile_ids.append(key)
            result.tile_detections[key] = kept
            result.tile_refined[key] = refine(kept, tile, classifier, settings.crop) if classifier else kept
            result.tile_gts[key] = tile_gts[meta.tile_id]
        return result

    merged = merge_pyramid(per_tile, settings.nms)
    if extra:
        merged = nms(merged + extra, settings.nms)
    result.detections = merged
    result.refined = refine(merged, slide_raster, classifier, settings.crop) if classifier else merged
    return result


def run_slides(
    slide_ids: Sequence[str],
    rasters: Sequence[np.ndarray],
    gts: Sequence[Sequence[GroundTruthBox]],
    settings: Settings,
    file_dets: Optional[Mapping[str, Sequence[Detection]]] = None,
    labels: Optional[Mapping[str, bool]] = None,
) -> PipelineResult:
    """Run every slide through the pipeline and score the merged output.

    Slides are processed concurrently with ``settings.threads`` workers;
    results are gathered in input order so the output does not depend on
    scheduling.
    """
    clf = classifier_from_config(settings.classifier_cfg) if settings.cascade else None

    def one(i: int) -> SlideResult:
        fd = None if file_dets is None else file_dets.get(slide_ids[i], [])
        return process_slide(i, slide_ids[i], rasters[i], gts[i], settings, clf, fd)

    stateful = clf is not None and not clf.thread_safe
    if settings.threads > 1 and not stateful:
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            results = list(pool.map(one, range(len(slide_ids))))
    else:
        results = [one(i) for i in range(len(slide_ids))]

    if settings.eval.granularity == "tile":
        keys = [k for r in results for k in r.tile_ids]
        pre = {k: r.tile_detections[k] for r in results for k in r.tile_ids}
        post = {k: r.tile_refined[k] for r in results for k in r.tile_ids}
        gt_map = {k: r.tile_gts[k] for r in results for k in r.tile_ids}
    else:
        keys = list(slide_ids)
        pre = {r.image_id: r.detections for r in results}
        post = {r.image_id: r.refined for r in results}
        gt_map = {s: list(g) for s, g in zip(slide_ids, gts)}

    report = evaluate(post, gt_map, settings.eval, settings.threads)
    pre_report = evaluate(pre, gt_map, settings.eval, settings.threads)

    slide_post = {r.image_id: (r.refined if settings.eval.granularity == "slide" else
                               [d for k in r.tile_ids for d in r.tile_refined[k]]) for r in results}
    predictions = {s: triage(slide_post[s], settings.tau) for s in slide_ids}
    truth = {s: (labels[s] if labels is not None and s in labels else slide_label(g)) for s, g in zip(slide_ids, gts)}
    report.triage = triage_metrics([predictions[s] for s in slide_ids], [truth[s] for s in slide_ids])
    return PipelineResult(list(slide_ids), report, pre_report, {k: post[k] for k in keys}, predictions, truth)


def load_manifest(path: Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if not isinstance(manifest, dict) or not isinstance(manifest.get("slides"), list):
        raise ValueError(f"{path}: manifest must hold a 'slides' list")
    return manifest
