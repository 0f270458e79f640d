"""Seeded synthetic slides, ground truth, and mock detector/classifier doubles.

Nothing here models cytology; the rasters only need to be croppable and the
mocks only need known, controllable error behavior so every downstream
number has an oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    HARD_ORDER,
    NUM_CLASSES,
    SLIDE,
    BBox,
    Category,
    Detection,
    GroundTruthBox,
    one_hot_scores,
)
from .pyramid import PyramidSpec, TileMeta, project_gt_to_tiles

# Per-class ground-truth totals of the reference dataset, used as default proportions.
REFERENCE_COUNTS = {
    Category.NORMAL: 21388,
    Category.ASCUS: 19879,
    Category.ASCH: 13616,
    Category.LSIL: 9092,
    Category.HSIL: 16711,
    Category.AGC: 20874,
    Category.ADE: 2930,
    Category.VAG: 18173,
    Category.MON: 9622,
    Category.DYS: 6029,
}

# ((w_min, w_max), (h_min, h_max)) in slide pixels
DEFAULT_SIZE_RANGES = {
    Category.NORMAL: ((60, 300), (60, 300)),
    Category.ASCUS: ((40, 220), (40, 220)),
    Category.ASCH: ((30, 160), (30, 160)),
    Category.LSIL: ((40, 240), (40, 240)),
    Category.HSIL: ((30, 180), (30, 180)),
    Category.AGC: ((40, 300), (40, 300)),
    Category.ADE: ((100, 600), (100, 800)),
    Category.VAG: ((15, 80), (15, 80)),
    Category.MON: ((20, 160), (20, 120)),
    Category.DYS: ((10, 60), (10, 60)),
}

CELL_COLORS = np.array(
    [
        (200, 120, 160),
        (170, 90, 150),
        (140, 60, 140),
        (180, 100, 120),
        (110, 40, 120),
        (90, 110, 170),
        (60, 70, 150),
        (120, 150, 90),
        (150, 130, 60),
        (100, 100, 100),
    ],
    dtype=np.uint8,
)
BACKGROUND = np.array((236, 228, 240), dtype=np.int16)


def proportional_counts(total: int, weights: Mapping[Category, int] = REFERENCE_COUNTS) -> dict[Category, int]:
    """Split ``total`` across classes proportionally (largest remainder, ties by class order)."""
    s = sum(weights.values())
    exact = {c: total * weights.get(c, 0) / s for c in Category}
    counts = {c: int(math.floor(v)) for c, v in exact.items()}
    short = total - sum(counts.values())
    for c in sorted(Category, key=lambda c: (-(exact[c] - counts[c]), int(c)))[:short]:
        counts[c] += 1
    return counts


def derive_seed(*key: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


@dataclass(frozen=True)
class FixtureSpec:
    seed: int = 0
    slide_size: tuple[int, int] = (4000, 3000)
    counts: Mapping[Category, int] = field(default_factory=lambda: proportional_counts(20))
    size_ranges: Mapping[Category, tuple] = field(default_factory=lambda: dict(DEFAULT_SIZE_RANGES))
    min_gap: int = 4
    max_retries: int = 2000

    def __post_init__(self):
        counts = {Category(c): int(n) for c, n in self.counts.items()}
        if any(n < 0 for n in counts.values()):
            raise ValueError("instance counts must be non-negative")
        object.__setattr__(self, "counts", counts)
        sw, sh = self.slide_size
        for c, ((w0, w1), (h0, h1)) in self.size_ranges.items():
            if counts.get(Category(c), 0) == 0:
                continue
            if not (0 < w0 <= w1 <= sw and 0 < h0 <= h1 <= sh):
                raise ValueError(f"size range for {Category(c).label} does not fit the slide")


def _render_background(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    patch = rng.integers(-6, 7, size=(64, 64, 1), dtype=np.int16)
    reps = (math.ceil(height / 64), math.ceil(width / 64), 1)
    texture = np.tile(patch, reps)[:height, :width]
    return np.clip(BACKGROUND + texture, 0, 255).astype(np.uint8)


def _paint_ellipse(image: np.ndarray, box: BBox, color: np.ndarray) -> None:
    x0, y0 = int(math.floor(box.x)), int(math.floor(box.y))
    x1, y1 = int(math.ceil(box.x2)), int(math.ceil(box.y2))
    yy, xx = np.mgrid[y0:y1, x0:x1]
    cx, cy = box.x + box.w / 2, box.y + box.h / 2
    inside = ((xx + 0.5 - cx) / (box.w / 2)) ** 2 + ((yy + 0.5 - cy) / (box.h / 2)) ** 2 <= 1.0
    image[y0:y1, x0:x1][inside] = color


def generate_slide(spec: FixtureSpec = FixtureSpec(), image_id: str = "slide") -> tuple[np.ndarray, list[GroundTruthBox]]:
    """Render a slide with non-overlapping elliptical cells at integer positions."""
    rng = np.random.default_rng(spec.seed)
    sw, sh = spec.slide_size
    image = _render_background(rng, sw, sh)
    placed: list[BBox] = []
    gts: list[GroundTruthBox] = []
    gap = spec.min_gap
    for category in Category:
        (w0, w1), (h0, h1) = spec.size_ranges[category]
        for _ in range(spec.counts.get(category, 0)):
            for _attempt in range(spec.max_retries):
                w = int(rng.integers(w0, w1 + 1))
                h = int(rng.integers(h0, h1 + 1))
                x = int(rng.integers(0, sw - w + 1))
                y = int(rng.integers(0, sh - h + 1))
                box = BBox(x, y, w, h, SLIDE)
                padded = BBox(x - gap, y - gap, w + 2 * gap, h + 2 * gap, SLIDE)
                if all(padded.intersection(p) == 0.0 for p in placed):
                    break
            else:
                raise RuntimeError(
                    f"could not place a {category.label} cell after {spec.max_retries} attempts"
                )
            placed.append(box)
            _paint_ellipse(image, box, CELL_COLORS[category])
            gts.append(GroundTruthBox(box, category, image_id))
    return image, gts


# ---------------------------------------------------------------------------
# mock detector


@dataclass(frozen=True)
class NoiseSpec:
    """Error model of the mock detector. The defaults describe a perfect detector."""

    jitter_sigma: float = 0.0
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0
    confusion: np.ndarray = field(default_factory=lambda: np.eye(NUM_CLASSES))
    # "perfect": every score is 1.0; "beta": matched in [0.6, 1], spurious in [0.05, 0.6)
    score_model: str = "perfect"
    seed: int = 0

    def __post_init__(self):
        conf = np.asarray(self.confusion, dtype=np.float64)
        if conf.shape != (NUM_CLASSES, NUM_CLASSES):
            raise ValueError(f"confusion must be {NUM_CLASSES}x{NUM_CLASSES}")
        if np.any(conf < 0) or not np.allclose(conf.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("confusion rows must be non-negative and sum to 1")
        object.__setattr__(self, "confusion", conf)
        if not 0.0 <= self.miss_rate <= 1.0:
            raise ValueError("miss_rate must lie in [0, 1]")
        if self.jitter_sigma < 0 or self.false_positive_rate < 0:
            raise ValueError("jitter_sigma and false_positive_rate must be non-negative")
        if self.score_model not in ("perfect", "beta"):
            raise ValueError(f"unknown score model {self.score_model!r}")


def swap_confusion(a: Category, b: Category) -> np.ndarray:
    conf = np.eye(NUM_CLASSES)
    conf[[a, b]] = conf[[b, a]]
    return conf


def mock_detect(
    gts: Sequence[GroundTruthBox],
    noise: NoiseSpec = NoiseSpec(),
    image_size: tuple[int, int] = (4000, 3000),
    space: Optional[str] = None,
    key: Sequence[int] = (),
) -> list[Detection]:
    """Turn ground truth into detector output under ``noise``.

    ``key`` is mixed into the noise seed so different images draw
    independent yet reproducible noise.
    """
    rng = np.random.default_rng(np.random.SeedSequence([noise.seed, *key]))
    space = space if space is not None else (gts[0].bbox.space if gts else SLIDE)
    iw, ih = image_size
    perfect = noise.score_model == "perfect"
    out: list[Detection] = []

    for g in gts:
        if noise.miss_rate > 0 and rng.random() < noise.miss_rate:
            continue
        b = g.bbox
        if noise.jitter_sigma > 0:
            dx, dy, dw, dh = rng.normal(0.0, noise.jitter_sigma, size=4)
            x1 = min(max(b.x + dx, 0.0), iw - 1.0)
            y1 = min(max(b.y + dy, 0.0), ih - 1.0)
            w = min(max(b.w + dw, 1.0), iw - x1)
            h = min(max(b.h + dh, 1.0), ih - y1)
            b = BBox(x1, y1, w, h, b.space)
        row = noise.confusion[g.category]
        cls = Category(int(rng.choice(NUM_CLASSES, p=row))) if row[g.category] < 1.0 else g.category
        obj = 1.0 if perfect else 0.6 + 0.4 * float(rng.beta(5.0, 1.5))
        out.append(Detection.from_scores(b, obj, one_hot_scores(cls)))

    if noise.false_positive_rate > 0:
        for _ in range(int(rng.poisson(noise.false_positive_rate))):
            cls = Category(int(rng.integers(NUM_CLASSES)))
            (w0, w1), (h0, h1) = DEFAULT_SIZE_RANGES[cls]
            w = float(min(rng.uniform(w0, w1), iw))
            h = float(min(rng.uniform(h0, h1), ih))
            x = float(rng.uniform(0, iw - w))
            y = float(rng.uniform(0, ih - h))
            obj = 1.0 if perfect else float(rng.uniform(0.05, 0.6))
            out.append(Detection.from_scores(BBox(x, y, w, h, space), obj, one_hot_scores(cls)))
    return out


class MockDetector:
    """Per-tile detector double backed by one slide's ground truth.

    It sees the cells whose visible fraction in a tile is at least
    ``visibility`` (1.0: only cells lying wholly inside the tile).
    """

    def __init__(
        self,
        gts: Sequence[GroundTruthBox],
        noise: NoiseSpec = NoiseSpec(),
        pyramid: PyramidSpec = PyramidSpec(),
        visibility: float = 1.0,
        slide_index: int = 0,
    ):
        self.gts = list(gts)
        self.noise = noise
        self.pyramid = pyramid
        self.visibility = visibility
        self.slide_index = slide_index

    def detect(self, tile: np.ndarray, meta: TileMeta) -> list[Detection]:
        local = project_gt_to_tiles(self.gts, [meta], self.pyramid, self.visibility)[meta.tile_id]
        return mock_detect(local, self.noise, meta.size, meta.space, key=(self.slide_index, meta.tile_id))


# ---------------------------------------------------------------------------
# mock hard-example classifier


class MockClassifier:
    """4-way classifier double driven by a row-stochastic matrix.

    Rows are indexed by the incoming (detector-predicted) hard class, columns
    by the returned class, both in (ASCUS, ASCH, LSIL, HSIL) order. 0/1
    matrices answer deterministically; otherwise each call samples a class
    from the row, so the double is stateful and declares itself
    single-threaded.
    """

    input_edge = 299

    def __init__(self, matrix, seed: int = 0):
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError("classifier matrix must be 4x4")
        if np.any(m < 0) or not np.allclose(m.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("classifier matrix must be row-stochastic")
        self.matrix = m
        self.deterministic = bool(np.all((m == 0.0) | (m == 1.0)))
        self.thread_safe = self.deterministic
        self._rng = np.random.default_rng(seed)

    def __call__(self, patch: np.ndarray, detection: Detection) -> np.ndarray:
        row = self.matrix[HARD_ORDER.index(detection.category)]
        if self.deterministic:
            return row.copy()
        out = np.zeros(4)
        out[self._rng.choice(4, p=row)] = 1.0
        return out


def mock_classify(matrix, seed: int = 0) -> MockClassifier:
    return MockClassifier(matrix, seed)


def classifier_from_config(cfg: Mapping) -> MockClassifier:
    """Build a mock from ``{"type": "identity" | "constant" | "confusion", ...}``."""
    kind = cfg.get("type", "identity")
    if kind == "identity":
        return MockClassifier(np.eye(4))
    if kind == "constant":
        target = Category.from_name(cfg.get("category", "hsil"))
        if target not in HARD_ORDER:
            raise ValueError(f"constant classifier target {target.label!r} is not a hard class")
        m = np.zeros((4, 4))
        m[:, HARD_ORDER.index(target)] = 1.0
        return MockClassifier(m)
    if kind == "confusion":
        return MockClassifier(cfg["matrix"], int(cfg.get("seed", 0)))
    raise ValueError(f"unknown classifier type {kind!r}")


# ---------------------------------------------------------------------------
# multi-slide fixture sets


@dataclass(frozen=True)
class FixtureSet:
    slide_ids: list[str]
    rasters: list[np.ndarray]
    gts: list[list[GroundTruthBox]]
    seeds: list[int]


def generate_fixture_set(
    n_slides: int,
    seed: int = 0,
    base: FixtureSpec = FixtureSpec(),
    negative_fraction: float = 0.3,
) -> FixtureSet:
    """Generate ``n_slides`` slides; a fixed share carries no positive-class cells."""
    rng = np.random.default_rng(seed)
    n_neg = int(round(n_slides * negative_fraction))
    negative = set(int(i) for i in rng.choice(n_slides, size=n_neg, replace=False)) if n_neg else set()
    ids, rasters, gts, seeds = [], [], [], []
    for i in range(n_slides):
        counts = dict(base.counts)
        if i in negative:
            counts = {c: (0 if c.is_positive else n) for c, n in counts.items()}
        s = derive_seed(seed, i)
        spec = FixtureSpec(s, base.slide_size, counts, base.size_ranges, base.min_gap, base.max_retries)
        image_id = f"slide_{i:03d}"
        raster, boxes = generate_slide(spec, image_id)
        ids.append(image_id)
        rasters.append(raster)
        gts.append(boxes)
        seeds.append(s)
    return FixtureSet(ids, rasters, gts, seeds)
