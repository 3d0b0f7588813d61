"""Segmentation and skeleton validation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class EvalResult:
    dice: float
    hausdorff_mm: float
    completeness: float
    correctness: float


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    return p, t


def dice(pred, truth) -> float:
    """2|A∩B| / (|A| + |B|); 1.0 when both are empty."""
    p, t = _pair(pred, truth)
    total = int(p.sum()) + int(t.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(p & t)) / total


def directed_distances(src, dst) -> np.ndarray:
    """Euclidean distance (px) from each on-pixel of ``src`` to the nearest on-pixel of ``dst``."""
    return ndimage.distance_transform_edt(~dst)[src]


def hausdorff(pred, truth, mm_per_pixel: float = 1.0) -> float:
    """Symmetric Hausdorff distance in mm; ``inf`` if either set is empty."""
    p, t = _pair(pred, truth)
    if not p.any() or not t.any():
        return math.inf
    d = max(directed_distances(p, t).max(), directed_distances(t, p).max())
    return float(d) * mm_per_pixel


def skeleton_completeness_correctness(pred_skel, truth_skel, tolerance_px: float = 3.0) -> tuple[float, float]:
    """Fraction of truth pixels within tolerance of the prediction, and vice versa; NaN for an empty side."""
    p, t = _pair(pred_skel, truth_skel)

    def covered(src, dst):
        if not src.any():
            return math.nan
        if not dst.any():
            return 0.0
        return float(np.mean(directed_distances(src, dst) <= tolerance_px))

    return covered(t, p), covered(p, t)


def evaluate(pred, truth, mm_per_pixel: float = 1.0, tolerance_px: float = 3.0, skeletonize=None) -> EvalResult:
    """All four scores; skeletons come from ``skeletonize`` (the masks themselves if None)."""
    p, t = _pair(pred, truth)
    ps, ts = (p, t) if skeletonize is None else (skeletonize(p), skeletonize(t))
    comp, corr = skeleton_completeness_correctness(ps, ts, tolerance_px)
    return EvalResult(dice(p, t), hausdorff(p, t, mm_per_pixel), comp, corr)
