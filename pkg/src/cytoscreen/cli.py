"""Command-line entry point: tile, anchors, eval, triage, synth, pipeline."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import formats
from .anchors import kmeans_anchors
from .core import ContractViolation, Category
from .evaluator import EvalConfig, evaluate, triage, triage_metrics
from .fixtures import FixtureSpec, generate_fixture_set, proportional_counts
from .imaging import draw_overlay, read_raster, write_raster
from .pipeline import Settings, load_manifest, merge_config, run_slides, DEFAULT_CONFIG
from .pyramid import PyramidSpec, build_pyramid, tile_pyramid, tile_space_dims

CONFIG_ENV = "CYTOSCREEN_CONFIG"

EXIT_OK = 0
EXIT_MISSING = 2
EXIT_SCHEMA = 3
EXIT_CONTRACT = 4

log = logging.getLogger("cytoscreen")


def _map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _require(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise FileNotFoundError(str(p))


def _emit(text: str, out) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_document(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ValueError(f"{path}: unreadable config: {exc}") from None
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a key/value mapping")
    return doc


# ---------------------------------------------------------------------------


def cmd_tile(args) -> int:
    _require(args.image)
    spec = PyramidSpec()
    image = read_raster(args.image)
    tiles = tile_pyramid(build_pyramid(image, spec), spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def write(item):
        raster, meta = item
        name = f"tile_{meta.tile_id:02d}.png"
        write_raster(out / name, raster)
        return {**meta.to_dict(), "file": name}

    records = _map(write, tiles, args.threads)
    manifest = {
        "source": Path(args.image).name,
        "layer_sizes": [list(s) for s in spec.layer_sizes],
        "tile_size": list(spec.tile_size),
        "tiles": records,
    }
    formats.write_json(out / "tiles.json", manifest)
    return EXIT_OK


def cmd_anchors(args) -> int:
    _require(args.gt)
    gts = formats.read_ground_truth(args.gt)
    boxes = np.array([g.bbox.as_list() for items in gts.values() for g in items], dtype=np.float64).reshape(-1, 4)
    if args.space == "tile":
        dims = tile_space_dims(boxes, PyramidSpec())
    else:
        dims = boxes[:, 2:]
    dims = dims[(dims[:, 0] > 0) & (dims[:, 1] > 0)]
    result = kmeans_anchors(dims, k=args.k, seed=args.seed, max_iter=args.max_iter)
    _emit(formats.dumps_report(result.to_dict()), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    _require(args.gt, args.det)
    gts = formats.read_ground_truth(args.gt)
    dets = formats.read_detections(args.det)
    cfg = EvalConfig(args.iou, args.credit == "on", args.granularity)
    report = evaluate(dets, gts, cfg, args.threads)
    _emit(formats.dumps_report(report.to_dict()), args.out)
    if args.pr_dir:
        pr = Path(args.pr_dir)
        pr.mkdir(parents=True, exist_ok=True)
        for c, r in report.per_class.items():
            lines = ["rank,score,recall,precision\n"]
            m_scores = sorted(
                (d.final_score for ds in dets.values() for d in ds if d.category == c), reverse=True
            )
            for k, (rec, prec) in enumerate(zip(r.recall, r.precision)):
                lines.append(f"{k + 1},{m_scores[k]!r},{rec!r},{prec!r}\n")
            (pr / f"pr_{c.label}.csv").write_text("".join(lines), encoding="utf-8")
    return EXIT_OK


def cmd_triage(args) -> int:
    _require(args.det, args.labels)
    dets = formats.read_detections(args.det)
    labels = formats.read_labels(args.labels)
    ids = list(labels)
    preds = [triage(dets.get(i, []), args.tau) for i in ids]
    metrics = triage_metrics(preds, [labels[i] for i in ids])
    out = metrics.to_dict()
    out["tau"] = args.tau
    out["predictions"] = {i: ("positive" if p else "negative") for i, p in zip(ids, preds)}
    _emit(formats.dumps_report(out), args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    doc = {}
    if args.spec:
        _require(args.spec)
        doc = _load_document(args.spec)
    seed = int(args.seed if args.seed is not None else doc.get("seed", 0))
    n_slides = int(doc.get("n_slides", 1))
    size = tuple(doc.get("slide_size", (4000, 3000)))
    if "counts" in doc:
        counts = {Category.from_name(k): int(v) for k, v in doc["counts"].items()}
        counts = {c: counts.get(c, 0) for c in Category}
    else:
        counts = proportional_counts(int(doc.get("cells_per_slide", 20)))
    base = FixtureSpec(seed=seed, slide_size=size, counts=counts)
    fx = generate_fixture_set(n_slides, seed, base, float(doc.get("negative_fraction", 0.3)))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = [f"{s}.png" for s in fx.slide_ids]
    _map(lambda i: write_raster(out / files[i], fx.rasters[i]), range(n_slides), args.threads)
    formats.write_ground_truth(out / "gt.jsonl", dict(zip(fx.slide_ids, fx.gts)))
    formats.write_labels(
        out / "labels.jsonl",
        {s: any(g.category.is_positive for g in gts) for s, gts in zip(fx.slide_ids, fx.gts)},
    )
    manifest = {
        "seed": seed,
        "n_slides": n_slides,
        "slide_size": list(size),
        "counts": {c.label: n for c, n in counts.items()},
        "negative_fraction": float(doc.get("negative_fraction", 0.3)),
        "slides": [
            {"image_id": s, "file": f, "seed": sd, "n_cells": len(g)}
            for s, f, sd, g in zip(fx.slide_ids, files, fx.seeds, fx.gts)
        ],
    }
    formats.write_json(out / "manifest.json", manifest)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    config_path = args.config or os.environ.get(CONFIG_ENV)
    if not config_path:
        raise ValueError(f"no config given (use --config or set {CONFIG_ENV})")
    _require(config_path)
    base_dir = Path(config_path).resolve().parent
    cfg = merge_config(DEFAULT_CONFIG, _load_document(config_path))
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads_given:
        cfg["threads"] = args.threads
    settings = Settings.from_config(cfg)

    def resolve(p):
        return None if p is None else (base_dir / p)

    manifest_path = resolve(cfg["input"]["manifest"])
    gt_path = resolve(cfg["input"]["gt"]) or manifest_path.parent / "gt.jsonl"
    labels_path = resolve(cfg["input"]["labels"])
    det_path = resolve(cfg["detector"]["detections"]) if cfg["detector"]["source"] == "file" else None
    if cfg["detector"]["source"] == "file" and det_path is None:
        raise ValueError("detector.source 'file' needs detector.detections")
    if cfg["detector"]["source"] not in ("mock", "file"):
        raise ValueError(f"unknown detector source {cfg['detector']['source']!r}")
    _require(manifest_path, gt_path, labels_path, det_path)

    manifest = load_manifest(manifest_path)
    slide_ids = [s["image_id"] for s in manifest["slides"]]
    raster_paths = [manifest_path.parent / s["file"] for s in manifest["slides"]]
    _require(*raster_paths)
    gts = formats.read_ground_truth(gt_path)
    labels = formats.read_labels(labels_path) if labels_path else None
    file_dets = formats.read_detections(det_path) if det_path else None
    rasters = _map(read_raster, raster_paths, settings.threads)

    result = run_slides(slide_ids, rasters, [gts.get(s, []) for s in slide_ids], settings, file_dets, labels)

    out = Path(args.out or base_dir / cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    formats.write_json(out / "report.json", result.to_dict())
    formats.write_detections(out / "detections.jsonl", result.detections)
    if cfg["output"]["overlays"] and settings.eval.granularity == "slide":
        ov = out / "overlays"
        ov.mkdir(exist_ok=True)

        def overlay(i):
            s = slide_ids[i]
            boxes = [(d.bbox, d.category) for d in result.detections[s]]
            write_raster(ov / f"{s}.png", draw_overlay(rasters[i], boxes))

        _map(overlay, range(len(slide_ids)), settings.threads)
    log.info("mAP %.4f over %d slides", result.report.map, len(slide_ids))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cytoscreen", description=__doc__)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default 1)")
    p.add_argument("--seed", type=int, default=None, help="override every configured seed")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("tile", help="split a raster into pyramid tiles")
    s.add_argument("--image", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_tile)

    s = sub.add_parser("anchors", help="k-means anchor priors from ground truth")
    s.add_argument("--gt", required=True)
    s.add_argument("--k", type=int, default=9)
    s.add_argument("--max-iter", type=int, default=300)
    s.add_argument("--space", choices=("tile", "slide"), default="tile")
    s.add_argument("--out")
    s.set_defaults(func=cmd_anchors)

    s = sub.add_parser("eval", help="per-class AP and mAP")
    s.add_argument("--gt", required=True)
    s.add_argument("--det", required=True)
    s.add_argument("--iou", type=float, default=0.5)
    s.add_argument("--credit", choices=("on", "off"), default="off")
    s.add_argument("--granularity", choices=("tile", "slide"), default="slide")
    s.add_argument("--out")
    s.add_argument("--pr-dir", help="write one PR-curve CSV per class here")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("triage", help="slide-level positive/negative metrics")
    s.add_argument("--det", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--tau", type=float, default=0.5)
    s.add_argument("--out")
    s.set_defaults(func=cmd_triage)

    s = sub.add_parser("synth", help="generate a synthetic fixture set")
    s.add_argument("--spec")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("pipeline", help="run the full pipeline from a config file")
    s.add_argument("--config", help=f"YAML config (default: ${CONFIG_ENV})")
    s.add_argument("--out", help="output directory (overrides output.dir)")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    args.threads_given = args.threads is not None
    args.threads = max(1, args.threads or 1)
    if args.command == "anchors" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        log.error("missing input: %s", exc)
        return EXIT_MISSING
    except formats.SchemaError as exc:
        log.error("schema violation: %s", exc)
        return EXIT_SCHEMA
    except ContractViolation as exc:
        log.error("contract violation: %s", exc)
        return EXIT_CONTRACT
    except (ValueError, KeyError, TypeError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
