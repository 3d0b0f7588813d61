"""Seed detection and SORT-style multi-plant tracking with quality control.

Boxes are ``(cx, cy, w, h)`` in continuous pixel coordinates: a component
spanning columns ``x0..x1`` covers ``[x0, x1 + 1)`` so its centre is
``(x0 + x1 + 1) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .assignment import linear_sum_assignment
from .mask_io import BACKGROUND, LabelMask

EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class GroupSpec:
    """Experimental group covering a rectangular plate region ``(x, y, w, h)`` in pixels."""

    group_id: str
    region: tuple[int, int, int, int]
    expected_seed_count: int | None = None

    def contains(self, cx: float, cy: float) -> bool:
        x, y, w, h = self.region
        return x <= cx < x + w and y <= cy < y + h

    def overlaps(self, other: "GroupSpec") -> bool:
        ax, ay, aw, ah = self.region
        bx, by, bw, bh = other.region
        return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def validate_groups(groups: list[GroupSpec]) -> None:
    for i, a in enumerate(groups):
        for b in groups[i + 1 :]:
            if a.overlaps(b):
                raise ValueError(f"group regions {a.group_id!r} and {b.group_id!r} overlap")


@dataclass(frozen=True)
class Detection:
    bbox: tuple[float, float, float, float]
    area_px: int
    classes_present: frozenset[int]
    centroid: tuple[float, float] = (math.nan, math.nan)


def detect(mask: LabelMask | np.ndarray, min_area_px: int = 10) -> list[Detection]:
    """One detection per 8-connected non-background component of at least ``min_area_px`` pixels."""
    labels = mask.labels if isinstance(mask, LabelMask) else np.asarray(mask)
    comp, n = ndimage.label(labels != BACKGROUND, structure=EIGHT)
    if n == 0:
        return []
    areas = np.bincount(comp.ravel(), minlength=n + 1)
    out = []
    for k, sl in enumerate(ndimage.find_objects(comp), start=1):
        if areas[k] < min_area_px:
            continue
        sub = comp[sl] == k
        ys, xs = np.nonzero(sub)
        y0, x0 = sl[0].start, sl[1].start
        h, w = sl[0].stop - y0, sl[1].stop - x0
        classes = frozenset(np.unique(labels[sl][sub]).tolist())
        out.append(
            Detection(
                bbox=(x0 + w / 2.0, y0 + h / 2.0, float(w), float(h)),
                area_px=int(areas[k]),
                classes_present=classes,
                centroid=(x0 + xs.mean() + 0.5, y0 + ys.mean() + 0.5),
            )
        )
    return out


def iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = a[0] - a[2] / 2, a[1] - a[3] / 2, a[0] + a[2] / 2, a[1] + a[3] / 2
    bx0, by0, bx1, by1 = b[0] - b[2] / 2, b[1] - b[3] / 2, b[0] + b[2] / 2, b[1] + b[3] / 2
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union > 0 else 0.0


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    a = np.asarray(boxes_a, dtype=float).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=float).reshape(-1, 4)
    a0, a1 = a[:, None, :2] - a[:, None, 2:] / 2, a[:, None, :2] + a[:, None, 2:] / 2
    b0, b1 = b[None, :, :2] - b[None, :, 2:] / 2, b[None, :, :2] + b[None, :, 2:] / 2
    wh = np.clip(np.minimum(a1, b1) - np.maximum(a0, b0), 0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def associate(track_boxes, detection_boxes, iou_threshold: float = 0.3):
    """Hungarian matching minimising the summed ``1 - IoU``.

    Returns ``(matches, unmatched_tracks, unmatched_detections)``; matched
    pairs whose IoU falls below ``iou_threshold`` are split apart.
    """
    n_t, n_d = len(track_boxes), len(detection_boxes)
    if n_t == 0 or n_d == 0:
        return [], list(range(n_t)), list(range(n_d))
    ious = iou_matrix(track_boxes, detection_boxes)
    rows, cols = linear_sum_assignment(1.0 - ious)
    matches = [(int(r), int(c)) for r, c in zip(rows, cols) if ious[r, c] >= iou_threshold]
    matched_t = {r for r, _ in matches}
    matched_d = {c for _, c in matches}
    return (
        matches,
        [t for t in range(n_t) if t not in matched_t],
        [d for d in range(n_d) if d not in matched_d],
    )


# constant-velocity model over (cx, cy, area, aspect); aspect has no velocity
_F = np.eye(7)
_F[0, 4] = _F[1, 5] = _F[2, 6] = 1.0
_H = np.eye(4, 7)
_R = np.diag([1.0, 1.0, 10.0, 10.0])
_Q = np.diag([1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 0.0001])


def _to_z(bbox) -> np.ndarray:
    cx, cy, w, h = bbox
    return np.array([cx, cy, w * h, w / h])


@dataclass
class KalmanTrack:
    id: int
    state: np.ndarray
    covariance: np.ndarray
    age: int = 0
    hits: int = 1
    hit_streak: int = 1
    time_since_update: int = 0
    confirmed: bool = False
    qc_flags: set[str] = field(default_factory=set)

    @classmethod
    def from_detection(cls, track_id: int, bbox) -> "KalmanTrack":
        x = np.zeros(7)
        x[:4] = _to_z(bbox)
        p = np.diag([10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4])
        return cls(track_id, x, p)

    def bbox(self) -> tuple[float, float, float, float]:
        cx, cy, s, r = self.state[:4]
        s = max(s, 1e-9)
        w = math.sqrt(s * r)
        return (float(cx), float(cy), float(w), float(s / w))

    def predict(self) -> "KalmanTrack":
        if self.state[2] + self.state[6] <= 0:
            self.state[6] = 0.0
        self.state = _F @ self.state
        self.covariance = _F @ self.covariance @ _F.T + _Q
        self.age += 1
        if self.time_since_update > 0:
            self.hit_streak = 0
        self.time_since_update += 1
        return self

    def update(self, bbox) -> "KalmanTrack":
        z = _to_z(bbox)
        y = z - _H @ self.state
        s = _H @ self.covariance @ _H.T + _R
        k = np.linalg.solve(s, _H @ self.covariance).T
        self.state = self.state + k @ y
        i_kh = np.eye(7) - k @ _H
        # Joseph form keeps the covariance symmetric positive semidefinite
        self.covariance = i_kh @ self.covariance @ i_kh.T + k @ _R @ k.T
        self.time_since_update = 0
        self.hits += 1
        self.hit_streak += 1
        return self


@dataclass(frozen=True)
class TrackSnapshot:
    frame: int
    track_id: int
    bbox: tuple[float, float, float, float]
    matched: bool
    detection_index: int | None


class SortTracker:
    """Simple Online Realtime Tracking over per-frame detections."""

    def __init__(self, max_age: int = 20, min_hits: int = 3, iou_threshold: float = 0.3):
        self.max_age = max_age
        self.min_hits = min_hits
        self.iou_threshold = iou_threshold
        self.tracks: list[KalmanTrack] = []
        self.next_id = 0

    def step(self, detections: list[Detection], frame_index: int) -> list[TrackSnapshot]:
        """Predict, associate, update; returns snapshots of confirmed live tracks."""
        for t in self.tracks:
            t.predict()
        # a diverged prediction cannot be matched; drop it like SORT does
        self.tracks = [t for t in self.tracks if np.all(np.isfinite(t.state)) and t.state[2] > 0]
        boxes = [d.bbox for d in detections]
        matches, _, unmatched_d = associate([t.bbox() for t in self.tracks], boxes, self.iou_threshold)
        det_of = {}
        for ti, di in matches:
            self.tracks[ti].update(boxes[di])
            det_of[ti] = di
        for ti, t in enumerate(self.tracks):
            if t.hit_streak >= self.min_hits:
                t.confirmed = True
        snaps = [
            TrackSnapshot(frame_index, t.id, t.bbox(), ti in det_of, det_of.get(ti))
            for ti, t in enumerate(self.tracks)
            if t.confirmed
        ]
        for di in unmatched_d:
            self.tracks.append(KalmanTrack.from_detection(self.next_id, boxes[di]))
            self.next_id += 1
        self.tracks = [t for t in self.tracks if t.time_since_update <= self.max_age]
        return snaps


def run_tracking(detections_per_frame, max_age=20, min_hits=3, iou_threshold=0.3):
    tracker = SortTracker(max_age, min_hits, iou_threshold)
    history = []
    for i, dets in enumerate(detections_per_frame):
        history.extend(tracker.step(dets, i))
    return history


@dataclass
class QualityFlags:
    touching_from: int | None = None
    abnormal_motion_from: int | None = None

    @property
    def flags(self) -> set[str]:
        out = set()
        if self.touching_from is not None:
            out.add("touching")
        if self.abnormal_motion_from is not None:
            out.add("abnormal_motion")
        return out

    @property
    def excluded_from(self) -> int | None:
        starts = [f for f in (self.touching_from, self.abnormal_motion_from) if f is not None]
        return min(starts) if starts else None


def _overlap(a, b) -> bool:
    return abs(a[0] - b[0]) * 2 < a[2] + b[2] and abs(a[1] - b[1]) * 2 < a[3] + b[3]


def quality_control(
    history: list[TrackSnapshot],
    mm_per_pixel: float = 1.0,
    touch_frames: int = 4,
    v_max_mm: float = 1.0,
) -> dict[int, QualityFlags]:
    """Flag tracks whose boxes overlap another's for ``touch_frames`` consecutive frames,
    or whose matched centre moves more than ``v_max_mm`` per frame.

    Flags apply from the first frame of the offending contact or jump onward.
    """
    max_step_px = v_max_mm / mm_per_pixel
    flags = {s.track_id: QualityFlags() for s in history}
    by_frame: dict[int, list[TrackSnapshot]] = {}
    for s in history:
        by_frame.setdefault(s.frame, []).append(s)
    run_start: dict[tuple[int, int], int] = {}
    run_len: dict[tuple[int, int], int] = {}
    prev_frame = None
    for frame in sorted(by_frame):
        snaps = sorted(by_frame[frame], key=lambda s: s.track_id)
        touching_now = set()
        for i in range(len(snaps)):
            for j in range(i + 1, len(snaps)):
                if _overlap(snaps[i].bbox, snaps[j].bbox):
                    touching_now.add((snaps[i].track_id, snaps[j].track_id))
        for pair in touching_now:
            if pair in run_len and prev_frame is not None and frame == prev_frame + 1:
                run_len[pair] += 1
            else:
                run_start[pair], run_len[pair] = frame, 1
            if run_len[pair] >= touch_frames:
                for tid in pair:
                    f = flags[tid]
                    if f.touching_from is None or run_start[pair] < f.touching_from:
                        f.touching_from = run_start[pair]
        for pair in list(run_len):
            if pair not in touching_now:
                del run_len[pair], run_start[pair]
        prev_frame = frame

    last_seen: dict[int, TrackSnapshot] = {}
    for s in sorted(history, key=lambda s: (s.track_id, s.frame)):
        if not s.matched:
            continue
        prev = last_seen.get(s.track_id)
        if prev is not None:
            step = math.hypot(s.bbox[0] - prev.bbox[0], s.bbox[1] - prev.bbox[1])
            if step > max_step_px * (s.frame - prev.frame) and flags[s.track_id].abnormal_motion_from is None:
                flags[s.track_id].abnormal_motion_from = s.frame
        last_seen[s.track_id] = s
    return flags
