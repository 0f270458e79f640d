"""Independent reference implementations used as test oracles.

Each one recomputes a quantity by definition (brute force, exact rationals,
pixel counting) without touching the code path under test.
"""

from fractions import Fraction
import itertools

import numpy as np


def pixel_iou(a, b):
    """IoU of integer-aligned (x, y, w, h) boxes by counting unit cells."""
    xs = range(min(a[0], b[0]), max(a[0] + a[2], b[0] + b[2]))
    ys = range(min(a[1], b[1]), max(a[1] + a[3], b[1] + b[3]))
    inter = union = 0
    for x, y in itertools.product(xs, ys):
        ina = a[0] <= x < a[0] + a[2] and a[1] <= y < a[1] + a[3]
        inb = b[0] <= x < b[0] + b[2] and b[1] <= y < b[1] + b[3]
        inter += ina and inb
        union += ina or inb
    return Fraction(inter, union) if union else Fraction(0)


def staircase_ap11(outcomes, npos):
    """Exact 11-point AP from a ranked TP/FP outcome list (1 = TP, 0 = FP).

    For every recall level r in {0, 0.1, ..., 1}, scans every rank and takes
    the best precision among ranks whose recall reaches r.
    """
    if npos == 0:
        return None if not outcomes else Fraction(0)
    total = Fraction(0)
    for k in range(11):
        r = Fraction(k, 10)
        best = Fraction(0)
        for n in range(1, len(outcomes) + 1):
            tp = sum(outcomes[:n])
            if Fraction(tp, npos) >= r:
                best = max(best, Fraction(tp, n))
        total += best
    return total / 11


def voc_devkit_outcomes(dets, gts, thresh=0.5, iou_fn=pixel_iou):
    """VOC devkit matching for one class and image.

    ``dets``: list of (score, box); ``gts``: list of boxes. Each detection
    (by descending score) looks at its max-IoU ground truth; TP if above the
    threshold and not yet taken, FP otherwise.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i][0])
    taken = [False] * len(gts)
    out = []
    for i in order:
        box = dets[i][1]
        best, best_j = Fraction(-1), -1
        for j, g in enumerate(gts):
            o = iou_fn(box, g)
            if o > best:
                best, best_j = o, j
        if best_j >= 0 and best >= Fraction(thresh).limit_denominator(1000) and not taken[best_j]:
            taken[best_j] = True
            out.append(1)
        else:
            out.append(0)
    return out


def reference_nms(items, thresh, iou_fn):
    """NMS by definition: a box survives iff no surviving higher-ranked same-class box overlaps it.

    ``items``: list of (score, category, box). Rank is (-score, index).
    Returns surviving indices in rank order.
    """
    ranked = sorted(range(len(items)), key=lambda i: (-items[i][0], i))
    alive = []
    for i in ranked:
        if all(items[j][1] != items[i][1] or iou_fn(items[j][2], items[i][2]) <= thresh for j in alive):
            alive.append(i)
    return alive


def central_difference(f, z, h=1e-6):
    z = np.asarray(z, dtype=np.float64)
    g = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (f(z + e) - f(z - e)) / (2 * h)
    return g
