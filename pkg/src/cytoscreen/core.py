"""Category taxonomy, box geometry and detection records shared by every stage."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Optional, Sequence


class ContractViolation(ValueError):
    """Raised when an operation is called outside its documented preconditions."""


class Category(IntEnum):
    NORMAL = 0
    ASCUS = 1
    ASCH = 2
    LSIL = 3
    HSIL = 4
    AGC = 5
    ADE = 6
    VAG = 7
    MON = 8
    DYS = 9

    @property
    def is_hard(self) -> bool:
        return self in HARD_CATEGORIES

    @property
    def is_positive(self) -> bool:
        return self in POSITIVE_CATEGORIES

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "Category":
        try:
            return _BY_NAME[name]
        except (KeyError, TypeError):
            raise ValueError(f"unknown category name {name!r}") from None


NUM_CLASSES = len(Category)

# Order of the cascade classifier's 4-way output.
HARD_ORDER: tuple[Category, ...] = (Category.ASCUS, Category.ASCH, Category.LSIL, Category.HSIL)
HARD_CATEGORIES = frozenset(HARD_ORDER)
POSITIVE_CATEGORIES = frozenset(
    {Category.ASCUS, Category.LSIL, Category.ASCH, Category.HSIL, Category.AGC, Category.ADE}
)
CATEGORY_NAMES: tuple[str, ...] = tuple(c.label for c in Category)
_BY_NAME = {c.label: c for c in Category}

SLIDE = "slide"


def layer_space(index: int) -> str:
    return f"layer-{index}"


def tile_space(tile_id: int) -> str:
    return f"tile({tile_id})"


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, top-left corner plus size, tagged with its coordinate space."""

    x: float
    y: float
    w: float
    h: float
    space: str = SLIDE

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.w >= 0 and self.h >= 0):
            raise ContractViolation(f"negative box size: w={self.w}, h={self.h}")
        for v in (self.x, self.y, self.w, self.h):
            if not math.isfinite(v):
                raise ContractViolation(f"non-finite box coordinate in {self}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float, space: str = SLIDE) -> "BBox":
        return cls(x1, y1, x2 - x1, y2 - y1, space)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    def intersection(self, other: "BBox") -> float:
        iw = min(self.x2, other.x2) - max(self.x, other.x)
        ih = min(self.y2, other.y2) - max(self.y, other.y)
        if iw <= 0 or ih <= 0:
            return 0.0
        return iw * ih

    def clip(self, x0: float, y0: float, x1: float, y1: float) -> Optional["BBox"]:
        """Clip to the window [x0, x1) x [y0, y1); None if nothing is left."""
        cx1, cy1 = max(self.x, x0), max(self.y, y0)
        cx2, cy2 = min(self.x2, x1), min(self.y2, y1)
        if cx2 <= cx1 or cy2 <= cy1:
            return None
        return BBox(cx1, cy1, cx2 - cx1, cy2 - cy1, self.space)


def iou(a: BBox, b: BBox) -> float:
    if a.space != b.space:
        raise ContractViolation(f"iou across coordinate spaces {a.space!r} and {b.space!r}")
    inter = a.intersection(b)
    if inter <= 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, inter / union)


def _check_probability(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise ContractViolation(f"{name} must be a probability in [0, 1], got {value!r}")


def fuse_score(objectness: float, class_prob: float) -> float:
    """Final detection confidence: objectness times the class posterior."""
    _check_probability("objectness", objectness)
    _check_probability("class_prob", class_prob)
    return objectness * class_prob


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    objectness: float
    category: Category
    final_score: float
    class_scores: Optional[tuple[float, ...]] = None
    relabeled: bool = False

    def __post_init__(self):
        _check_probability("objectness", self.objectness)
        _check_probability("final_score", self.final_score)
        object.__setattr__(self, "category", Category(self.category))
        if self.class_scores is not None:
            scores = tuple(float(s) for s in self.class_scores)
            if len(scores) != NUM_CLASSES:
                raise ContractViolation(f"class_scores must have {NUM_CLASSES} entries")
            for s in scores:
                _check_probability("class score", s)
            object.__setattr__(self, "class_scores", scores)

    @classmethod
    def from_scores(
        cls, bbox: BBox, objectness: float, class_scores: Sequence[float]
    ) -> "Detection":
        """Build a detector output: argmax category, fused score."""
        scores = tuple(float(s) for s in class_scores)
        if len(scores) != NUM_CLASSES:
            raise ContractViolation(f"class_scores must have {NUM_CLASSES} entries")
        best = max(range(NUM_CLASSES), key=lambda i: (scores[i], -i))
        return cls(
            bbox=bbox,
            objectness=objectness,
            category=Category(best),
            final_score=fuse_score(objectness, scores[best]),
            class_scores=scores,
        )

    @property
    def space(self) -> str:
        return self.bbox.space

    def with_bbox(self, bbox: BBox) -> "Detection":
        return replace(self, bbox=bbox)


@dataclass(frozen=True)
class GroundTruthBox:
    bbox: BBox
    category: Category
    source_image_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))

    def with_bbox(self, bbox: BBox) -> "GroundTruthBox":
        return replace(self, bbox=bbox)


def one_hot_scores(category: Category, prob: float = 1.0) -> tuple[float, ...]:
    """Class-score vector with ``prob`` on ``category`` and the rest spread evenly."""
    rest = (1.0 - prob) / (NUM_CLASSES - 1)
    return tuple(prob if i == int(category) else rest for i in range(NUM_CLASSES))
