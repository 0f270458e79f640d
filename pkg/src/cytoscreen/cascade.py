"""Cascade refinement of hard-class detections by a pluggable 4-way classifier."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .core import HARD_ORDER, ContractViolation, Detection
from .imaging import resize_bilinear


@runtime_checkable
class HardClassifier(Protocol):
    """Four-way classifier over (ASCUS, ASCH, LSIL, HSIL).

    ``__call__`` receives the resized RGB patch and the detection it was cut
    from; real models ignore the detection, test doubles may key on it.
    Implementations that are not safe for concurrent calls set
    ``thread_safe = False``.
    """

    input_edge: int
    thread_safe: bool

    def __call__(self, patch: np.ndarray, detection: Detection) -> np.ndarray: ...


class ClassifierContractError(ContractViolation):
    def __init__(self, index: int, message: str):
        super().__init__(f"detection {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class CropConfig:
    context_pad: float = 0.1
    output_edge: int = 299

    def __post_init__(self):
        if self.context_pad < 0:
            raise ValueError("context_pad must be non-negative")
        if self.output_edge <= 0:
            raise ValueError("output_edge must be positive")


def select_hard(dets: Sequence[Detection]) -> tuple[list[Detection], list[Detection]]:
    hard = [d for d in dets if d.category.is_hard]
    rest = [d for d in dets if not d.category.is_hard]
    return hard, rest


def crop_region(det: Detection, cfg: CropConfig) -> tuple[float, float, float, float]:
    """Padded crop window (x, y, w, h) before clipping."""
    b = det.bbox
    px, py = b.w * cfg.context_pad, b.h * cfg.context_pad
    return b.x - px, b.y - py, b.w + 2 * px, b.h + 2 * py


def extract_crop(image: np.ndarray, det: Detection, cfg: CropConfig = CropConfig(), edge: int | None = None) -> np.ndarray:
    h, w = image.shape[:2]
    x, y, cw, ch = crop_region(det, cfg)
    x0, y0 = max(0, math.floor(x)), max(0, math.floor(y))
    x1, y1 = min(w, math.ceil(x + cw)), min(h, math.ceil(y + ch))
    if x1 <= x0 or y1 <= y0:
        raise ContractViolation(f"crop window {(x, y, cw, ch)} lies outside the {w}x{h} image")
    edge = cfg.output_edge if edge is None else edge
    return resize_bilinear(image[y0:y1, x0:x1], edge, edge)


def _check_output(probs, index: int) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != (len(HARD_ORDER),):
        raise ClassifierContractError(index, f"expected 4 probabilities, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ClassifierContractError(index, f"output {p.tolist()} is not a probability vector")
    return p


def refine(
    dets: Sequence[Detection],
    image: np.ndarray,
    clf: HardClassifier,
    cfg: CropConfig = CropConfig(),
    threads: int = 1,
) -> list[Detection]:
    """Relabel hard-class detections with ``clf``; other detections pass through.

    The new score is objectness times the classifier's probability for the
    chosen class. Boxes and objectness are never touched.
    """
    dets = list(dets)
    hard_idx = [i for i, d in enumerate(dets) if d.category.is_hard]
    edge = getattr(clf, "input_edge", cfg.output_edge)

    def run(i: int) -> np.ndarray:
        patch = extract_crop(image, dets[i], cfg, edge)
        return _check_output(clf(patch, dets[i]), i)

    if threads > 1 and getattr(clf, "thread_safe", False) and len(hard_idx) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(run, hard_idx))
    else:
        outputs = [run(i) for i in hard_idx]

    out = list(dets)
    for i, p in zip(hard_idx, outputs):
        best = int(np.argmax(p))  # first index wins ties
        d = dets[i]
        out[i] = replace(
            d,
            category=HARD_ORDER[best],
            final_score=min(1.0, d.objectness * float(p[best])),
            relabeled=True,
        )
    return out
