"""Segmentation-free cervical cytology screening toolkit.

Pyramid tiling, anchor clustering, detection merging, cascade relabeling,
label-smoothing math, partial-credit VOC evaluation and slide triage, with
mock detector/classifier doubles for verification.
"""

from .core import (
    BBox,
    Category,
    ContractViolation,
    Detection,
    GroundTruthBox,
    fuse_score,
    iou,
)

__all__ = [
    "BBox",
    "Category",
    "ContractViolation",
    "Detection",
    "GroundTruthBox",
    "fuse_score",
    "iou",
]
__version__ = "0.1.0"
