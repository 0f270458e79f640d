"""Softmax, cross-entropy and label smoothing as plain numpy utilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12
DEFAULT_EPSILON = 0.1


@dataclass(frozen=True)
class LabelDistribution:
    q: np.ndarray
    smoothed: bool = False
    epsilon: float = 0.0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim != 1 or q.size == 0:
            raise ValueError("label distribution must be a non-empty vector")
        if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
            raise ValueError("label distribution must be non-negative and sum to 1")
        object.__setattr__(self, "q", q)

    @classmethod
    def one_hot(cls, index: int, k: int = 10) -> "LabelDistribution":
        if not 0 <= index < k:
            raise ValueError(f"class index {index} out of range for K={k}")
        q = np.zeros(k)
        q[index] = 1.0
        return cls(q)

    @property
    def k(self) -> int:
        return self.q.size


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(q, p) -> float:
    """-sum q_i ln p_i in nats, with p floored at PROB_FLOOR."""
    q = q.q if isinstance(q, LabelDistribution) else np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != p.shape:
        raise ValueError(f"K mismatch: q has shape {q.shape}, p has shape {p.shape}")
    return float(-np.sum(q * np.log(np.maximum(p, PROB_FLOOR))))


def entropy(q) -> float:
    q = q.q if isinstance(q, LabelDistribution) else np.asarray(q, dtype=np.float64)
    nz = q > 0
    return float(-np.sum(q[nz] * np.log(q[nz])))


def smooth_labels(q: LabelDistribution, epsilon: float = DEFAULT_EPSILON) -> LabelDistribution:
    """Move ``epsilon`` of the mass uniformly over all K classes."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    if q.k < 2:
        raise ValueError("smoothing needs at least two classes")
    if np.count_nonzero(q.q) != 1 or q.q.max() != 1.0:
        raise ValueError("smooth_labels expects a one-hot distribution")
    if epsilon == 0.0:
        return q
    smoothed = (1.0 - epsilon) * q.q + epsilon / q.k
    # renormalize away last-bit drift so the sum is 1 to machine precision
    smoothed = smoothed / smoothed.sum()
    return LabelDistribution(smoothed, smoothed=True, epsilon=epsilon)


def cross_entropy_grad(z, q) -> np.ndarray:
    """Analytic gradient of cross_entropy(q, softmax(z)) w.r.t. the logits."""
    q = q.q if isinstance(q, LabelDistribution) else np.asarray(q, dtype=np.float64)
    return softmax(z) - q
