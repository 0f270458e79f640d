"""Anchor-box priors by k-means under the concentric IoU distance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AnchorSet:
    anchors: tuple[tuple[float, float], ...]
    seed: int
    iterations_run: int
    mean_iou: float
    # mean IoU distance after each assignment step
    history: tuple[float, ...] = field(default=(), compare=False)

    @property
    def k(self) -> int:
        return len(self.anchors)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "anchors": [list(a) for a in self.anchors],
            "mean_iou": self.mean_iou,
            "iterations_run": self.iterations_run,
        }


def _as_dims(dims) -> np.ndarray:
    arr = np.asarray(dims, dtype=np.float64).reshape(-1, 2)
    if arr.size and not np.all(arr > 0):
        raise ValueError("box dimensions must be strictly positive")
    return arr


def iou_distance(box, anchor) -> float:
    """1 - IoU of two (w, h) boxes sharing a center."""
    (bw, bh), (aw, ah) = _as_dims([box, anchor])
    inter = min(bw, aw) * min(bh, ah)
    return 1.0 - inter / (bw * bh + aw * ah - inter)


def iou_distance_matrix(dims: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Pairwise IoU distance, shape (len(dims), len(centroids))."""
    inter = np.minimum(dims[:, None, 0], centroids[None, :, 0]) * np.minimum(dims[:, None, 1], centroids[None, :, 1])
    union = (dims[:, 0] * dims[:, 1])[:, None] + (centroids[:, 0] * centroids[:, 1])[None, :] - inter
    return 1.0 - inter / union


def _farthest_point_init(dims: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    idx = [int(rng.integers(len(dims)))]
    nearest = iou_distance_matrix(dims, dims[idx])[:, 0]
    while len(idx) < k:
        nxt = int(np.argmax(nearest))  # first index wins ties
        idx.append(nxt)
        nearest = np.minimum(nearest, iou_distance_matrix(dims, dims[nxt : nxt + 1])[:, 0])
    return dims[idx].copy()


def _assign(dims: np.ndarray, centroids: np.ndarray):
    dist = iou_distance_matrix(dims, centroids)
    labels = np.argmin(dist, axis=1)
    return labels, dist[np.arange(len(dims)), labels]


def kmeans_anchors(dims, k: int = 9, seed: int = 0, max_iter: int = 300) -> AnchorSet:
    """Cluster (w, h) pairs into ``k`` anchors, sorted by area ascending.

    Farthest-point seeding from a seeded RNG, nearest-centroid assignment,
    mean update. Stops when assignments repeat, after ``max_iter`` updates,
    or when an update would raise the mean distance (the previous centroids
    are kept in that case, so the recorded history never increases).
    """
    dims = _as_dims(dims)
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(dims) < k:
        raise ValueError(f"need at least k={k} boxes, got {len(dims)}")

    rng = np.random.default_rng(seed)
    centroids = _farthest_point_init(dims, k, rng)
    labels, dist = _assign(dims, centroids)
    history = [float(dist.mean())]
    iterations = 0

    while iterations < max_iter:
        new = np.empty_like(centroids)
        for j in range(k):
            members = labels == j
            if members.any():
                new[j] = dims[members].mean(axis=0)
            else:
                # reseed from the point worst served by its centroid
                worst = int(np.argmax(dist))
                new[j] = dims[worst]
                dist[worst] = 0.0
        new_labels, new_dist = _assign(dims, new)
        score = float(new_dist.mean())
        if score > history[-1]:
            break
        iterations += 1
        centroids = new
        history.append(score)
        converged = np.array_equal(new_labels, labels)
        labels, dist = new_labels, new_dist
        if converged:
            break

    order = np.lexsort((centroids[:, 0], centroids[:, 0] * centroids[:, 1]))
    centroids = centroids[order]
    return AnchorSet(
        anchors=tuple((float(w), float(h)) for w, h in centroids),
        seed=seed,
        iterations_run=iterations,
        mean_iou=1.0 - history[-1],
        history=tuple(history),
    )
