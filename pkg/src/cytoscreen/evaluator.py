"""VOC-style 11-point AP / mAP with partial credit, and slide-level triage metrics."""

from __future__ import annotations

import math
from bisect import bisect_left
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import Category, Detection, GroundTruthBox, NUM_CLASSES, iou

ASCH_AS_HSIL_CREDIT = 0.51
HSIL_AS_ASCH_CREDIT = 0.66


def identity_credit() -> np.ndarray:
    return np.eye(NUM_CLASSES)


def default_credit() -> np.ndarray:
    """Credit matrix indexed [predicted][truth] with the ASC-H/HSIL relaxation."""
    c = identity_credit()
    c[Category.ASCH, Category.HSIL] = ASCH_AS_HSIL_CREDIT
    c[Category.HSIL, Category.ASCH] = HSIL_AS_ASCH_CREDIT
    return c


def _validate_credit(credit: np.ndarray) -> np.ndarray:
    credit = np.asarray(credit, dtype=np.float64)
    if credit.shape != (NUM_CLASSES, NUM_CLASSES):
        raise ValueError(f"credit matrix must be {NUM_CLASSES}x{NUM_CLASSES}")
    if np.any(credit < 0) or np.any(credit > 1) or not np.all(np.diag(credit) == 1.0):
        raise ValueError("credit entries must lie in [0, 1] with a unit diagonal")
    return credit


@dataclass(frozen=True)
class Match:
    image_id: str
    det_index: int
    gt_index: int
    gt_category: Category
    credit: float


@dataclass
class ClassMatch:
    """Outcome of matching one class: per-detection TP/FP weights in score order."""

    category: Category
    tp: list[float]
    fp: list[float]
    scores: list[float]
    n_gt: int
    npos: float
    matches: list[Match] = field(default_factory=list)


def match_class(
    category: Category,
    dets_by_image: Mapping[str, Sequence[Detection]],
    gts_by_image: Mapping[str, Sequence[GroundTruthBox]],
    iou_thresh: float = 0.5,
    credit: Optional[np.ndarray] = None,
) -> ClassMatch:
    """Greedy matching of all ``category`` detections, pooled over images.

    Detections are visited by descending score (ties: image id, then input
    index). Each takes the unmatched same-class GT with the highest IoU at or
    above ``iou_thresh``; failing that, the best unmatched cross-credited GT.
    A cross match scores TP ``C`` and FP ``1 - C`` and adds ``C`` to the
    recall denominator.
    """
    category = Category(category)
    credit = identity_credit() if credit is None else _validate_credit(credit)
    row = credit[category]
    cross = [Category(t) for t in range(NUM_CLASSES) if t != category and row[t] > 0]

    images = sorted(set(dets_by_image) | set(gts_by_image))
    cands = []
    for image_id in images:
        for i, d in enumerate(dets_by_image.get(image_id, ())):
            if d.category == category:
                cands.append((-d.final_score, image_id, i, d))
    cands.sort(key=lambda c: c[:3])

    n_gt = sum(1 for g in (gt for gts in gts_by_image.values() for gt in gts) if g.category == category)
    used: dict[str, set[int]] = {}
    tp: list[float] = []
    fp: list[float] = []
    matches: list[Match] = []
    extra = 0.0

    for _, image_id, i, d in cands:
        gts = gts_by_image.get(image_id, ())
        taken = used.setdefault(image_id, set())
        best = None
        for allowed in ([category], cross):
            best_iou = -1.0
            for j, g in enumerate(gts):
                if j in taken or g.category not in allowed:
                    continue
                o = iou(d.bbox, g.bbox)
                if o >= iou_thresh and o > best_iou:
                    best, best_iou = j, o
            if best is not None:
                break
        if best is None:
            tp.append(0.0)
            fp.append(1.0)
            continue
        taken.add(best)
        g = gts[best]
        c = float(row[g.category])
        if g.category != category:
            extra += c
        tp.append(c)
        fp.append(1.0 - c)
        matches.append(Match(image_id, i, best, g.category, c))

    return ClassMatch(
        category=category,
        tp=tp,
        fp=fp,
        scores=[-c[0] for c in cands],
        n_gt=n_gt,
        npos=n_gt + extra,
        matches=matches,
    )


def pr_curve(tp: Sequence[float], fp: Sequence[float], npos: float) -> tuple[np.ndarray, np.ndarray]:
    tp_c = np.cumsum(np.asarray(tp, dtype=np.float64))
    fp_c = np.cumsum(np.asarray(fp, dtype=np.float64))
    if npos <= 0:
        rec = np.zeros_like(tp_c)
    else:
        rec = tp_c / npos
    denom = tp_c + fp_c
    prec = np.divide(tp_c, denom, out=np.zeros_like(tp_c), where=denom > 0)
    return rec, prec


def ap_11point(tp: Sequence[float], fp: Sequence[float], npos: float) -> Optional[float]:
    """Mean interpolated precision at recall 0, 0.1, ..., 1.

    The staircase is integrated in exact rational arithmetic over the given
    float weights, so the result is the correctly rounded value. Returns None
    when the class has neither positives nor detections, and 0 when it has
    detections but nothing to recall.
    """
    if npos <= 0:
        return 0.0 if len(tp) else None
    n = len(tp)
    if n == 0:
        return 0.0
    total = Fraction(npos)
    tp_c, fp_c = Fraction(0), Fraction(0)
    recall, precision = [], []
    for t, f in zip(tp, fp):
        tp_c += Fraction(t)
        fp_c += Fraction(f)
        recall.append(tp_c / total)
        precision.append(tp_c / (tp_c + fp_c) if tp_c + fp_c else Fraction(0))
    # best precision at or after each rank
    for k in range(n - 2, -1, -1):
        if precision[k + 1] > precision[k]:
            precision[k] = precision[k + 1]
    points = Fraction(0)
    for k in range(11):
        first = bisect_left(recall, Fraction(k, 10))
        if first < n:
            points += precision[first]
    return float(points / 11)


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    credit: bool = False
    granularity: str = "slide"

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must lie in (0, 1]")
        if self.granularity not in ("tile", "slide"):
            raise ValueError(f"granularity must be 'tile' or 'slide', got {self.granularity!r}")

    def credit_matrix(self) -> np.ndarray:
        return default_credit() if self.credit else identity_credit()


@dataclass
class ClassReport:
    category: Category
    ap: Optional[float]
    n_gt: int
    n_det: int
    npos: float
    tp: float
    fp: float
    recall: list[float]
    precision: list[float]

    def to_dict(self) -> dict:
        return {
            "ap": self.ap,
            "n_gt": self.n_gt,
            "n_det": self.n_det,
            "npos": self.npos,
            "tp": self.tp,
            "fp": self.fp,
        }


@dataclass
class EvalReport:
    per_class: dict[Category, ClassReport]
    map: float
    matches: list[Match]
    config: EvalConfig
    triage: Optional["TriageMetrics"] = None

    @property
    def ap(self) -> dict[Category, Optional[float]]:
        return {c: r.ap for c, r in self.per_class.items()}

    def to_dict(self, with_curves: bool = False) -> dict:
        classes = {}
        for c, r in self.per_class.items():
            entry = r.to_dict()
            if with_curves:
                entry["recall"] = r.recall
                entry["precision"] = r.precision
            classes[c.label] = entry
        out = {
            "config": {
                "iou_threshold": self.config.iou_threshold,
                "credit": "on" if self.config.credit else "off",
                "granularity": self.config.granularity,
            },
            "map": self.map,
            "classes": classes,
            "matches": [
                {
                    "image_id": m.image_id,
                    "det_index": m.det_index,
                    "gt_index": m.gt_index,
                    "gt_category": m.gt_category.label,
                    "credit": m.credit,
                }
                for m in self.matches
            ],
        }
        if self.triage is not None:
            out["triage"] = self.triage.to_dict()
        return out


def evaluate(
    dets_by_image: Mapping[str, Sequence[Detection]],
    gts_by_image: Mapping[str, Sequence[GroundTruthBox]],
    cfg: EvalConfig = EvalConfig(),
    threads: int = 1,
) -> EvalReport:
    credit = cfg.credit_matrix()

    def one(c: Category) -> tuple[ClassMatch, ClassReport]:
        m = match_class(c, dets_by_image, gts_by_image, cfg.iou_threshold, credit)
        rec, prec = pr_curve(m.tp, m.fp, m.npos)
        report = ClassReport(
            category=c,
            ap=ap_11point(m.tp, m.fp, m.npos),
            n_gt=m.n_gt,
            n_det=len(m.tp),
            npos=m.npos,
            tp=math.fsum(m.tp),
            fp=math.fsum(m.fp),
            recall=rec.tolist(),
            precision=prec.tolist(),
        )
        return m, report

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, list(Category)))
    else:
        results = [one(c) for c in Category]

    per_class = {r.category: r for _, r in results}
    scored = [r.ap for r in per_class.values() if r.ap is not None]
    mean_ap = math.fsum(scored) / len(scored) if scored else 0.0
    matches = [mt for m, _ in results for mt in m.matches]
    return EvalReport(per_class=per_class, map=mean_ap, matches=matches, config=cfg)


# ---------------------------------------------------------------------------
# slide-level triage


def triage(dets: Iterable[Detection], tau: float = 0.5) -> bool:
    """A slide is positive when any positive-class detection scores at least ``tau``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    return any(d.category.is_positive and d.final_score >= tau for d in dets)


def slide_label(gts: Iterable[GroundTruthBox]) -> bool:
    """Reference label of a slide: positive iff it holds a positive-class cell."""
    return any(g.category.is_positive for g in gts)


def _pct(x: Optional[float]) -> Optional[float]:
    return None if x is None else round(100.0 * x, 1)


@dataclass(frozen=True)
class TriageMetrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def acc(self) -> float:
        return (self.tp + self.tn) / self.total

    @property
    def sens(self) -> Optional[float]:
        pos = self.tp + self.fn
        return self.tp / pos if pos else None

    @property
    def spec(self) -> Optional[float]:
        neg = self.tn + self.fp
        return self.tn / neg if neg else None

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "acc": self.acc,
            "sens": self.sens,
            "spec": self.spec,
            "acc_pct": _pct(self.acc),
            "sens_pct": _pct(self.sens),
            "spec_pct": _pct(self.spec),
        }


def triage_metrics(predictions: Sequence[bool], labels: Sequence[bool]) -> TriageMetrics:
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions for {len(labels)} labels")
    if not predictions:
        raise ValueError("triage_metrics needs at least one slide")
    tp = fp = tn = fn = 0
    for p, y in zip(predictions, labels):
        if p and y:
            tp += 1
        elif p:
            fp += 1
        elif y:
            fn += 1
        else:
            tn += 1
    return TriageMetrics(tp, fp, tn, fn)
