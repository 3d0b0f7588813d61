"""Desk-scale synthetic label-mask sequences for exercising the pipelines.

Roots are centerlines parameterised by arc length, revealed progressively
as they grow and stamped with a small disk brush.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mask_io import HYPOCOTYL, LATERAL_ROOT, LEAVES, MAIN_ROOT, SEED, write_sequence

STEP_PX = 0.5


def _disk(radius: float) -> np.ndarray:
    r = int(math.ceil(radius))
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    keep = dy**2 + dx**2 <= radius**2 + 1e-9
    return np.stack([dy[keep], dx[keep]], axis=1)


def stamp(labels: np.ndarray, points_xy: np.ndarray, value: int, radius: float = 1.0) -> None:
    """Paint ``value`` along centerline points with a disk brush, clipped to the frame."""
    if len(points_xy) == 0:
        return
    centers = np.unique(np.rint(points_xy[:, ::-1]).astype(int), axis=0)  # (y, x)
    pix = (centers[:, None, :] + _disk(radius)[None, :, :]).reshape(-1, 2)
    h, w = labels.shape
    ok = (pix[:, 0] >= 0) & (pix[:, 0] < h) & (pix[:, 1] >= 0) & (pix[:, 1] < w)
    labels[pix[ok, 0], pix[ok, 1]] = value


def ellipse(labels: np.ndarray, cx: float, cy: float, rx: float, ry: float, value: int) -> None:
    h, w = labels.shape
    y0, y1 = max(0, int(cy - ry - 1)), min(h, int(cy + ry + 2))
    x0, x1 = max(0, int(cx - rx - 1)), min(w, int(cx + rx + 2))
    yy, xx = np.mgrid[y0:y1, x0:x1]
    inside = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    labels[y0:y1, x0:x1][inside] = value


def angled_centerline(start_xy, angle_fn, length_px: float) -> np.ndarray:
    """Integrate a heading (degrees from straight down, positive towards +x) along arc length."""
    s = np.arange(0.0, length_px + STEP_PX / 2, STEP_PX)
    theta = np.radians(angle_fn(s))
    dx = np.sin(theta) * STEP_PX
    dy = np.cos(theta) * STEP_PX
    x = start_xy[0] + np.concatenate([[0.0], np.cumsum(dx[:-1])])
    y = start_xy[1] + np.concatenate([[0.0], np.cumsum(dy[:-1])])
    return np.stack([x, y], axis=1)


@dataclass
class _Lateral:
    emerge_hours: float
    emerge_arc_px: float
    side: int
    rate_px_h: float
    max_px: float
    vanish_hours: float = math.inf
    centerline: np.ndarray | None = None


@dataclass
class _Plant:
    plant_id: str
    group: str
    seed_xy: tuple[float, float]
    rate_px_h: float
    main: np.ndarray
    laterals: list[_Lateral]
    roi: tuple[int, int, int, int]


def _main_length(t: float, rate: float) -> float:
    # circadian-modulated rate r(1 + 0.3 sin(2πt/24)) integrated in closed form
    return rate * (t + 0.3 * 24.0 / (2 * math.pi) * (1.0 - math.cos(2 * math.pi * t / 24.0)))


def _make_plants(n_plants, width, height, rng) -> list[_Plant]:
    plants = []
    strip = width / n_plants
    for p in range(n_plants):
        cx = strip * (p + 0.5)
        seed_xy = (cx, 40.0)
        group = "A" if p % 2 == 0 else "B"
        rate = (7.0 if group == "A" else 5.6) * float(rng.uniform(0.95, 1.05))
        phase = float(rng.uniform(0, 2 * math.pi))
        y = np.arange(0.0, height - 60.0, STEP_PX)
        x = cx + 6.0 * np.sin(y / 70.0 + phase) - 6.0 * math.sin(phase)
        main = np.stack([x, seed_xy[1] + 7.0 + y], axis=1)
        arc = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(main, axis=0).T))])
        laterals = []
        for k in range(6):
            lat = _Lateral(
                emerge_hours=12.0 + 8.0 * k + float(rng.uniform(0, 2)),
                emerge_arc_px=60.0 + 45.0 * k,
                side=1 if k % 2 == 0 else -1,
                rate_px_h=float(rng.uniform(2.0, 3.0)),
                max_px=min(strip / 2 - 25.0, 120.0),
            )
            laterals.append(lat)
        # a short-lived structure the persistence filter must drop
        laterals.append(_Lateral(30.0, 200.0, -1, 6.0, 18.0, vanish_hours=34.0))
        for lat in laterals:
            i = int(np.searchsorted(arc, lat.emerge_arc_px))
            start = main[min(i, len(main) - 1)]
            theta0 = float(rng.uniform(60, 80))

            def heading(s, theta0=theta0, side=lat.side):
                return side * (40.0 + (theta0 - 40.0) * np.exp(-s / 50.0))

            lat.centerline = angled_centerline(start, heading, lat.max_px)
        x0 = int(strip * p) + 5
        roi = (x0, 0, int(strip) - 10, height)
        plants.append(_Plant(f"plant{p + 1}", group, seed_xy, rate, main, laterals, roi))
    return plants


def render_standard_frame(plants, t: float, width: int, height: int, rng=None, dropout=False) -> np.ndarray:
    labels = np.zeros((height, width), dtype=np.uint8)
    for plant in plants:
        cx, cy = plant.seed_xy
        ellipse(labels, cx, cy - 14, 9, 5, LEAVES)
        stamp(labels, np.array([[cx, cy - 9 + k * 0.5] for k in range(6)]), HYPOCOTYL, 1.0)
        n_main = int(_main_length(t, plant.rate_px_h) / STEP_PX)
        main = plant.main[: min(n_main + 1, len(plant.main))]
        stamp(labels, main, MAIN_ROOT, 1.0)
        main_len = len(main) * STEP_PX
        for lat in plant.laterals:
            if t < lat.emerge_hours or t >= lat.vanish_hours or main_len < lat.emerge_arc_px + 10:
                continue
            n = int(min(lat.max_px, (t - lat.emerge_hours) * lat.rate_px_h) / STEP_PX)
            if n >= 2:
                stamp(labels, lat.centerline[2 : n + 1], LATERAL_ROOT, 1.0)
        ellipse(labels, cx, cy, 6, 5, SEED)
        if dropout and len(main) > 80:
            # a droplet hides a short stretch of the main root for one frame
            i = int(rng.integers(40, len(main) - 30))
            seg = main[i : i + 20]
            stamp(labels, seg, 0, 2.0)
    return labels


def generate_standard(
    out_dir,
    n_frames: int = 300,
    width: int = 820,
    height: int = 616,
    n_plants: int = 2,
    interval_hours: float = 0.25,
    mm_per_pixel: float = 0.04,
    seed: int = 0,
    dropout_rate: float = 0.03,
) -> Path:
    """Write a standard-mode sequence plus a ready-to-run config; returns the config path."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    plants = _make_plants(n_plants, width, height, rng)
    times = [k * interval_hours for k in range(n_frames)]
    frames = [
        render_standard_frame(plants, t, width, height, rng, dropout=bool(rng.random() < dropout_rate))
        for t in times
    ]
    manifest = write_sequence(out_dir / "masks", frames, times, mm_per_pixel)
    config = {
        "mode": "standard",
        "manifest": str(Path(manifest).relative_to(out_dir)),
        "output": "bundle",
        "rois": [
            {
                "plant_id": p.plant_id,
                "group": p.group,
                "x": p.roi[0],
                "y": p.roi[1],
                "w": p.roi[2],
                "h": p.roi[3],
                "seed_hint": [round(p.seed_xy[0]), round(p.seed_xy[1] + 7)],
            }
            for p in plants
        ],
    }
    path = out_dir / "config.json"
    path.write_text(json.dumps(config, indent=1) + "\n", encoding="utf-8")
    return path


def hill_quantile(p, g0: float, g_max: float, n: float, t50: float) -> np.ndarray:
    """Inverse of the Hill curve: the time at which ``G(t) = p`` percent."""
    q = (np.asarray(p, dtype=float) - g0) / g_max
    return t50 * (q / (1.0 - q)) ** (1.0 / n)


def generate_screening(
    out_dir,
    n_frames: int = 200,
    width: int = 820,
    height: int = 616,
    rows: int = 10,
    cols: int = 10,
    interval_hours: float = 0.25,
    mm_per_pixel: float = 0.04,
    seed: int = 0,
    germination=(0.0, 95.0, 8.0, 13.4),
    dormant_all: bool = False,
) -> Path:
    """Write a screening plate: a seed grid split into two groups (left and right halves)."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    dx, dy = width / cols, height / rows
    n = rows * cols
    g0, g_max, hill_n, t50 = germination
    # evenly spread quantiles; the remaining seeds stay dormant
    n_germ = 0 if dormant_all else int(round(n * g_max / 100.0))
    germ_times = np.full(n, np.inf)
    order = rng.permutation(n)
    germ_times[order[:n_germ]] = hill_quantile((np.arange(n_germ) + 0.5) / n * 100.0, g0, g_max, hill_n, t50)
    centres = [(dx * (c + 0.5), dy * (r + 0.5) - 10.0) for r in range(rows) for c in range(cols)]
    times = [k * interval_hours for k in range(n_frames)]
    frames = []
    for t in times:
        labels = np.zeros((height, width), dtype=np.uint8)
        jitter = rng.uniform(-1.0, 1.0, size=(n, 2))
        for i, (cx, cy) in enumerate(centres):
            cx, cy = cx + jitter[i, 0], cy + jitter[i, 1]
            age = t - germ_times[i]
            if age >= 0:
                root_len = min(25.0, 2.0 + 3.0 * age)
                stamp(labels, np.array([[cx, cy + 4 + s] for s in np.arange(0, root_len, STEP_PX)]), MAIN_ROOT, 1.0)
            if age >= 6.0:
                hyp_len = min(15.0, 2.0 * (age - 6.0))
                if hyp_len >= 1.0:
                    stamp(labels, np.array([[cx, cy - 4 - s] for s in np.arange(0, hyp_len, STEP_PX)]), HYPOCOTYL, 1.0)
            ellipse(labels, cx, cy, 5, 4, SEED)
        frames.append(labels)
    manifest = write_sequence(out_dir / "masks", frames, times, mm_per_pixel)
    half = cols // 2
    config = {
        "mode": "screening",
        "manifest": str(Path(manifest).relative_to(out_dir)),
        "output": "bundle",
        "groups": [
            {"group_id": "A", "region": [0, 0, int(dx * half), height], "expected_seed_count": rows * half},
            {"group_id": "B", "region": [int(dx * half), 0, width - int(dx * half), height],
             "expected_seed_count": rows * (cols - half)},
        ],
    }
    path = out_dir / "config.json"
    path.write_text(json.dumps(config, indent=1) + "\n", encoding="utf-8")
    (out_dir / "truth.json").write_text(
        json.dumps({"germination_hours": [None if math.isinf(g) else float(g) for g in germ_times]}, indent=1) + "\n",
        encoding="utf-8",
    )
    return path
