"""Root-architecture metrics and time-series post-processing."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .graph import RootGraph

UNITS = frozenset({"mm", "mm/h", "mm²", "mm/mm²", "count", "LRs/cm", "ratio", "degrees", "%", "hours"})


class AngleUndefined(ValueError):
    pass


@dataclass(frozen=True)
class MetricSeries:
    plant_id: str
    metric_name: str
    times: np.ndarray
    values: np.ndarray
    units: str

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-D and of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.units not in UNITS:
            raise ValueError(f"unknown unit {self.units!r}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.times)

    def with_values(self, values, metric_name=None, units=None) -> "MetricSeries":
        return replace(
            self,
            values=np.asarray(values, dtype=float),
            metric_name=metric_name or self.metric_name,
            units=units or self.units,
        )


@dataclass(frozen=True)
class AngleRecord:
    lateral_track_id: int
    time_hours: float
    base_tip_deg: float
    emergence_deg: float  # nan until the lateral is at least d_mm long
    d_mm: float


def basic_architecture(graph: RootGraph) -> dict[str, float]:
    """Lengths (mm), lateral count, discrete density (LRs/cm) and main-over-total ratio."""
    mr = sum(e.length_mm for e in graph.edges_of_class("main"))
    lr = sum(e.length_mm for e in graph.edges_of_class("lateral"))
    count = len(graph.lateral_roots()) if graph.classified else 0
    return architecture_from_lengths(mr, lr, count)


def architecture_from_lengths(mr: float, lr: float, count: int) -> dict[str, float]:
    tr = mr + lr
    return {
        "main_root_length": float(mr),
        "lateral_root_length": float(lr),
        "total_root_length": float(tr),
        "lateral_root_count": float(count),
        "lateral_root_density": 10.0 * count / mr if mr > 0 else math.nan,
        "main_over_total": mr / tr if tr > 0 else math.nan,
    }


METRIC_UNITS = {
    "main_root_length": "mm",
    "lateral_root_length": "mm",
    "total_root_length": "mm",
    "lateral_root_count": "count",
    "lateral_root_density": "LRs/cm",
    "main_over_total": "ratio",
    "convex_hull_area": "mm²",
    "convex_hull_width": "mm",
    "convex_hull_height": "mm",
    "root_density": "mm/mm²",
    "aspect_ratio": "ratio",
}


def _vertical_angle(dx: float, dy: float) -> float:
    norm = math.hypot(dx, dy)
    if norm == 0:
        raise AngleUndefined("coincident points have no direction")
    # clip guards arccos against rounding just outside [-1, 1]
    return math.degrees(math.acos(max(-1.0, min(1.0, dy / norm))))


def base_tip_angle(base, tip) -> float:
    """Angle in degrees between the base->tip vector and straight down (image y grows downward)."""
    return _vertical_angle(tip[0] - base[0], tip[1] - base[1])


def point_at_arc_length(polyline, distance: float) -> np.ndarray | None:
    """Point at ``distance`` along a polyline (same units), linearly interpolated; None if too short."""
    pts = np.asarray(polyline, dtype=float)
    if len(pts) < 2:
        return None
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] + 1e-9 < distance:
        return None
    i = int(np.searchsorted(cum, distance, side="left"))
    if i == 0:
        return pts[0]
    i = min(i, len(pts) - 1)
    frac = (distance - cum[i - 1]) / seg[i - 1] if seg[i - 1] > 0 else 0.0
    return pts[i - 1] + min(frac, 1.0) * (pts[i] - pts[i - 1])


def emergence_angle(polyline, d_mm: float = 2.0, mm_per_pixel: float = 1.0) -> float | None:
    """Angle to vertical of the base->point vector, the point lying ``d_mm`` along the root.

    Returns None when the root is shorter than ``d_mm`` (not yet measurable).
    """
    pts = np.asarray(polyline, dtype=float)
    point = point_at_arc_length(pts, d_mm / mm_per_pixel)
    if point is None:
        return None
    return base_tip_angle(pts[0], point)


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull vertices by Andrew's monotone chain; collinear points dropped."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float).reshape(-1, 2).tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=float).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def polygon_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def hull_metrics_from_points(points_mm, total_length_mm: float | None = None) -> dict[str, float]:
    pts = np.asarray(points_mm, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return {k: math.nan for k in ("convex_hull_area", "convex_hull_width", "convex_hull_height", "root_density", "aspect_ratio")}
    area = polygon_area(convex_hull(pts))
    width = float(np.ptp(pts[:, 0]))
    height = float(np.ptp(pts[:, 1]))
    density = total_length_mm / area if total_length_mm is not None and area > 0 else math.nan
    return {
        "convex_hull_area": area,
        "convex_hull_width": width,
        "convex_hull_height": height,
        "root_density": density,
        "aspect_ratio": height / width if width > 0 else math.nan,
    }


def convex_hull_metrics(graph: RootGraph, mm_per_pixel: float | None = None) -> dict[str, float]:
    """Hull area, extents, root density and aspect ratio over every root pixel of the graph."""
    mpp = graph.mm_per_pixel if mm_per_pixel is None else mm_per_pixel
    return hull_metrics_from_points(graph.pixels() * mpp, graph.total_length_mm)


def growth_speed(series: MetricSeries) -> MetricSeries:
    """Time derivative: central differences inside, one-sided at the ends."""
    if len(series) < 2:
        raise ValueError("growth speed needs at least two samples")
    speed = np.gradient(series.values, series.times, edge_order=1)
    return series.with_values(speed, series.metric_name + "_speed", "mm/h")


def running_median(values: np.ndarray, half_width: int) -> np.ndarray:
    """Centred running median; the window is truncated at the series ends."""
    n = len(values)
    out = np.empty(n)
    for i in range(n):
        out[i] = np.median(values[max(0, i - half_width) : i + half_width + 1])
    return out


def detrend(series: MetricSeries, window_hours: float = 25.0) -> MetricSeries:
    """Subtract a centred running median spanning ``window_hours``."""
    if len(series) < 2:
        raise ValueError("series shorter than the detrending window")
    dt = float(np.median(np.diff(series.times)))
    window = int(round(window_hours / dt))
    window += (window + 1) % 2  # odd, so the window is centred
    if window < 3 or len(series) < window:
        raise ValueError(
            f"series of {len(series)} samples is shorter than the {window}-sample window"
        )
    trend = running_median(series.values, window // 2)
    return series.with_values(series.values - trend, series.metric_name + "_detrended")


@dataclass(frozen=True)
class Spectrum:
    """One-sided amplitude spectrum; index 0 is the mean (period ``inf``)."""

    frequencies: np.ndarray  # cycles per hour
    amplitudes: np.ndarray
    n_samples: int

    @property
    def periods(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.where(self.frequencies > 0, 1.0 / self.frequencies, np.inf)

    def peaks(self, count: int) -> list[tuple[float, float]]:
        """Largest local maxima excluding the mean term, as (period hours, amplitude)."""
        a = self.amplitudes
        idx = [
            k
            for k in range(1, len(a))
            if a[k] >= a[k - 1] and (k + 1 == len(a) or a[k] >= a[k + 1])
        ]
        idx.sort(key=lambda k: (-a[k], k))
        return [(float(self.periods[k]), float(a[k])) for k in idx[:count]]

    def amplitude_at(self, period_hours: float) -> float:
        k = int(np.argmin(np.abs(self.frequencies - 1.0 / period_hours)))
        return float(self.amplitudes[k])


def fourier_components(series: MetricSeries, min_samples: int = 16) -> Spectrum:
    """Amplitude spectrum of a series resampled to uniform spacing by linear interpolation."""
    if len(series) < min_samples:
        raise ValueError(f"Fourier analysis needs at least {min_samples} samples, got {len(series)}")
    t = series.times
    dt = float(np.median(np.diff(t)))
    n = int(round((t[-1] - t[0]) / dt)) + 1
    grid = t[0] + dt * np.arange(n)
    x = np.interp(grid, t, series.values)
    coef = np.fft.rfft(x)
    amp = np.abs(coef) / n
    # fold negative frequencies in; DC and (even-n) Nyquist appear once
    if n % 2 == 0:
        amp[1:-1] *= 2
    else:
        amp[1:] *= 2
    return Spectrum(np.fft.rfftfreq(n, d=dt), amp, n)


def parseval_energy(spectrum: Spectrum) -> float:
    """Mean squared signal value implied by the amplitude spectrum."""
    a = spectrum.amplitudes
    n = spectrum.n_samples
    energy = a[0] ** 2
    if n % 2 == 0:
        energy += np.sum(a[1:-1] ** 2) / 2 + a[-1] ** 2
    else:
        energy += np.sum(a[1:] ** 2) / 2
    return float(energy)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open index ranges of consecutive True values."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    d = np.diff(padded)
    return list(zip(np.flatnonzero(d == 1).tolist(), np.flatnonzero(d == -1).tolist()))


def persistence_filter(series: MetricSeries, min_hours: float = 6.0) -> MetricSeries:
    """Suppress false starts and transient structures.

    Each sample stands for one sampling interval, so a run of k nonzero
    samples lasts ``k * dt`` hours. Leading runs that do not last beyond
    ``min_hours`` are zeroed; if what remains is not present beyond
    ``min_hours`` in total, the whole series is zeroed.
    """
    if len(series) == 0:
        return series
    values = series.values.copy()
    dt = float(np.median(np.diff(series.times))) if len(series) > 1 else min_hours
    present = (values != 0) & np.isfinite(values)
    for start, stop in _runs(present):
        if (stop - start) * dt > min_hours + 1e-9:
            break
        values[start:stop] = 0.0
        present[start:stop] = False
    if present.sum() * dt <= min_hours + 1e-9:
        values[:] = 0.0
    return series.with_values(values)


def enforce_monotone(series: MetricSeries) -> MetricSeries:
    """Running maximum, so lengths never decrease."""
    values = series.values
    if len(values) == 0:
        return series
    finite = np.where(np.isfinite(values), values, -np.inf)
    out = np.maximum.accumulate(finite)
    out[np.isneginf(out)] = np.nan
    return series.with_values(out)
