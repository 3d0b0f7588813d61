"""Early-development measurements for tracked seedlings.

Germination events are detected per track and summarised by a
four-parameter Hill curve

    G(t) = g0 + g_max * t**n / (t50**n + t**n)

whose inflection (time of maximum germination rate) is
``t50 * ((n - 1) / (n + 1)) ** (1 / n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .mask_io import HYPOCOTYL, MAIN_ROOT, SEED, LabelMask
from .skeleton import longest_path_px, thin

EIGHT = np.ones((3, 3), dtype=bool)


def hill(t, g0: float, g_max: float, n: float, t50: float) -> np.ndarray:
    t = np.clip(np.asarray(t, dtype=float), 0.0, None)
    # (t/t50)**n form avoids overflow of t**n for steep curves
    r = (t / t50) ** n
    return g0 + g_max * r / (1.0 + r)


def tmgr(n: float, t50: float) -> float:
    """Time of maximum germination rate; 0 when ``n <= 1`` (the curve is concave from the start)."""
    if n <= 1.0:
        return 0.0
    return t50 * ((n - 1.0) / (n + 1.0)) ** (1.0 / n)


class HillCurve(RegressorMixin, BaseEstimator):
    """Bounded least-squares fit of the four-parameter Hill curve.

    Parameters
    ----------
    horizon : float
        Upper bound for ``t50`` in hours.
    t50_starts, n_starts : sequence of float, optional
        Multi-start grid. ``t50_starts`` defaults to the 25/50/75th
        percentiles of the times where the response first reaches those
        fractions of its maximum.
    """

    def __init__(self, horizon: float = 100.0, t50_starts=None, n_starts=(2.0, 4.0, 8.0)):
        self.horizon = horizon
        self.t50_starts = t50_starts
        self.n_starts = n_starts

    def fit(self, X, y):
        t = np.asarray(X, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if t.shape != y.shape or t.size < 4:
            raise ValueError("need at least four (time, response) pairs of equal length")
        lower = np.array([0.0, 0.0, 1.0, 1e-6])
        upper = np.array([20.0, 100.0, 50.0, float(self.horizon)])
        starts_t50 = self.t50_starts
        if starts_t50 is None:
            starts_t50 = self._percentile_starts(t, y)
        g0_start = float(np.clip(y.min(), lower[0], upper[0]))
        best = None
        for t50 in starts_t50:
            for n in self.n_starts:
                x0 = np.array([g0_start, max(y.max() - g0_start, 1e-3), n, t50])
                x0 = np.clip(x0, lower + 1e-9, upper - 1e-9)
                res = least_squares(
                    lambda p: hill(t, *p) - y,
                    x0,
                    bounds=(lower, upper),
                    method="trf",
                    x_scale="jac",
                    xtol=1e-12,
                    ftol=1e-12,
                    gtol=1e-12,
                    max_nfev=2000,
                )
                if best is None or res.cost < best.cost:
                    best = res
        g0, g_max, n, t50 = best.x
        # the percentage ceiling is a joint constraint the box bounds cannot express
        g_max = min(g_max, 100.0 - g0)
        self.g0_, self.g_max_, self.n_, self.t50_ = map(float, (g0, g_max, n, t50))
        self.rmse_ = float(np.sqrt(np.mean((self.predict(t) - y) ** 2)))
        return self

    def _percentile_starts(self, t, y):
        lo, hi = y.min(), y.max()
        if hi <= lo:
            return [float(np.median(t))]
        starts = []
        for q in (0.25, 0.5, 0.75):
            idx = int(np.argmax(y >= lo + q * (hi - lo)))
            starts.append(float(np.clip(t[idx], 1e-3, self.horizon)))
        return starts

    def predict(self, X):
        check_is_fitted(self, "t50_")
        return hill(np.asarray(X, dtype=float).reshape(-1), self.g0_, self.g_max_, self.n_, self.t50_)

    @property
    def tmgr_(self) -> float:
        check_is_fitted(self, "t50_")
        return tmgr(self.n_, self.t50_)


@dataclass(frozen=True)
class GerminationFit:
    g0: float
    g_max: float
    n: float
    t50: float
    tmgr: float
    rmse: float
    final_percent: float
    total_seeds: int
    per_seed_times: dict = field(default_factory=dict)

    @property
    def fitted(self) -> bool:
        return not math.isnan(self.t50)

    def curve(self, t) -> np.ndarray:
        return hill(t, self.g0, self.g_max, self.n, self.t50)


def cumulative_percent(event_times, total_seeds: int, frame_times) -> np.ndarray:
    """Empirical cumulative germination percentage at each frame time."""
    events = np.sort(np.asarray(event_times, dtype=float))
    counts = np.searchsorted(events, np.asarray(frame_times, dtype=float), side="right")
    return 100.0 * counts / total_seeds


def fit_hill(
    event_times,
    total_seeds: int,
    horizon: float,
    frame_times=None,
    per_seed_times: dict | None = None,
) -> GerminationFit:
    """Fit the Hill curve to the per-frame cumulative germination percentage.

    ``frame_times`` defaults to a 15-minute grid over ``[0, horizon]``.
    With no events the fit is skipped: parameters are NaN and the final
    percentage is 0.
    """
    if total_seeds < 1:
        raise ValueError("total_seeds must be at least 1")
    events = [float(e) for e in event_times if e is not None]
    if per_seed_times is None:
        per_seed_times = dict(enumerate(events))
    final = 100.0 * len(events) / total_seeds
    if not events:
        nan = math.nan
        return GerminationFit(nan, nan, nan, nan, nan, nan, 0.0, total_seeds, per_seed_times)
    if frame_times is None:
        frame_times = np.arange(0.0, horizon + 1e-9, 0.25)
    frame_times = np.asarray(frame_times, dtype=float)
    y = cumulative_percent(events, total_seeds, frame_times)
    model = HillCurve(horizon=horizon).fit(frame_times, y)
    return GerminationFit(
        model.g0_, model.g_max_, model.n_, model.t50_, model.tmgr_, model.rmse_,
        final, total_seeds, per_seed_times,
    )


def _region(labels: np.ndarray, bbox, margin_px: int) -> np.ndarray:
    cx, cy, w, h = bbox
    hgt, wid = labels.shape
    x0 = max(0, int(math.floor(cx - w / 2)) - margin_px)
    y0 = max(0, int(math.floor(cy - h / 2)) - margin_px)
    x1 = min(wid, int(math.ceil(cx + w / 2)) + margin_px)
    y1 = min(hgt, int(math.ceil(cy + h / 2)) + margin_px)
    return labels[y0:y1, x0:x1]


def root_pixels_at_seed(labels: np.ndarray) -> int:
    """Class-1 pixels 8-connected, through root pixels, to the seed component(s)."""
    seed = labels == SEED
    if not seed.any():
        return 0
    root = labels == MAIN_ROOT
    comp, _ = ndimage.label(seed | root, structure=EIGHT)
    touching = np.unique(comp[seed])
    return int(np.count_nonzero(root & np.isin(comp, touching)))


def detect_germination(
    boxes,
    masks,
    times,
    min_root_px: int = 3,
    min_frames: int = 4,
    margin_px: int = 10,
) -> float | None:
    """First time root pixels at the seed reach ``min_root_px`` and stay for ``min_frames`` frames.

    ``boxes`` holds the track's bbox per frame (None where the track is absent,
    which breaks a run).
    """
    run_start, run = None, 0
    for bbox, mask, t in zip(boxes, masks, times):
        labels = mask.labels if isinstance(mask, LabelMask) else np.asarray(mask)
        ok = bbox is not None and root_pixels_at_seed(_region(labels, bbox, margin_px)) >= min_root_px
        if ok:
            if run == 0:
                run_start = float(t)
            run += 1
            if run >= min_frames:
                return run_start
        else:
            run = 0
    return None


def _longest_path_mm(binary: np.ndarray, mm_per_pixel: float) -> float:
    if not binary.any():
        return 0.0
    return longest_path_px(thin(binary)) * mm_per_pixel


def hypocotyl_length(mask, bbox, mm_per_pixel: float, margin_px: int = 10) -> float:
    """Longest skeleton path of the class-4 pixels around a track, in mm; 0 when absent."""
    labels = mask.labels if isinstance(mask, LabelMask) else np.asarray(mask)
    return _longest_path_mm(_region(labels, bbox, margin_px) == HYPOCOTYL, mm_per_pixel)


def plant_measures(mask, bbox, mm_per_pixel: float, margin_px: int = 10) -> dict[str, float]:
    """Plant area (mm²), seed area (mm², NaN without seed pixels) and simple root length (mm)."""
    labels = mask.labels if isinstance(mask, LabelMask) else np.asarray(mask)
    region = _region(labels, bbox, margin_px)
    px_area = mm_per_pixel**2
    seed_px = int(np.count_nonzero(region == SEED))
    return {
        "plant_area": int(np.count_nonzero((region >= 1) & (region <= 6))) * px_area,
        "seed_size": seed_px * px_area if seed_px else math.nan,
        "root_length": _longest_path_mm(region == MAIN_ROOT, mm_per_pixel),
    }
