"""Label-mask input: PGM (P5) frames, JSON manifests, ROI cropping.

A mask frame is an 8-bit binary PGM whose raw byte values are class codes:

    0 background, 1 main root, 2 lateral root, 3 seed,
    4 hypocotyl, 5 leaves, 6 petiole

A manifest is a JSON document listing frames relative to its own directory::

    {"mm_per_pixel": 0.04,
     "frames": [{"file": "f0000.pgm", "time_hours": 0.0}, ...]}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

N_CLASSES = 7
BACKGROUND, MAIN_ROOT, LATERAL_ROOT, SEED, HYPOCOTYL, LEAVES, PETIOLE = range(7)
CLASS_NAMES = {
    BACKGROUND: "background",
    MAIN_ROOT: "main_root",
    LATERAL_ROOT: "lateral_root",
    SEED: "seed",
    HYPOCOTYL: "hypocotyl",
    LEAVES: "leaves",
    PETIOLE: "petiole",
}


class MaskError(ValueError):
    """Invalid mask, manifest or ROI. ``frame_index`` is set when a frame is at fault."""

    def __init__(self, message: str, frame_index: int | None = None):
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)
        self.frame_index = frame_index


@dataclass(frozen=True)
class LabelMask:
    """One frame of per-pixel class labels, stored as a read-only ``(height, width)`` uint8 array."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.shape[0] == 0 or labels.shape[1] == 0:
            raise MaskError(f"label grid must be 2-D and non-empty, got shape {labels.shape}")
        if labels.dtype != np.uint8:
            if labels.size and (labels.min() < 0 or labels.max() >= N_CLASSES):
                raise MaskError(f"label values must lie in 0..{N_CLASSES - 1}")
            labels = labels.astype(np.uint8)
        elif labels.size and labels.max() >= N_CLASSES:
            raise MaskError(f"label value {int(labels.max())} outside 0..{N_CLASSES - 1}")
        labels = np.array(labels, copy=True)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class RoiSpec:
    plant_id: str
    x: int
    y: int
    w: int
    h: int
    seed_hint: tuple[float, float] | None = None
    group: str = "default"

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise MaskError(f"ROI {self.plant_id!r} must have positive size")

    def check_bounds(self, width: int, height: int) -> None:
        if self.x < 0 or self.y < 0 or self.x + self.w > width or self.y + self.h > height:
            raise MaskError(
                f"ROI {self.plant_id!r} ({self.x},{self.y},{self.w},{self.h}) "
                f"outside {width}x{height} frame"
            )


@dataclass(frozen=True)
class FrameSequence:
    masks: tuple[LabelMask, ...]
    times: np.ndarray
    mm_per_pixel: float
    interval_hours: float = field(init=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if len(self.masks) == 0:
            raise MaskError("no frames")
        if len(times) != len(self.masks):
            raise MaskError("one timestamp is required per frame")
        if not self.mm_per_pixel > 0:
            raise MaskError("mm_per_pixel must be positive")
        shape = self.masks[0].labels.shape
        for i, m in enumerate(self.masks):
            if m.labels.shape != shape:
                raise MaskError(f"dimensions {m.labels.shape} differ from {shape}", i)
        for i in range(1, len(times)):
            if not times[i] > times[i - 1]:
                raise MaskError("timestamps must be strictly increasing", i)
        times.flags.writeable = False
        object.__setattr__(self, "times", times)
        # median gap; a single frame falls back to the nominal 15 min cadence
        interval = float(np.median(np.diff(times))) if len(times) > 1 else 0.25
        object.__setattr__(self, "interval_hours", interval)

    def __len__(self) -> int:
        return len(self.masks)

    @property
    def width(self) -> int:
        return self.masks[0].width

    @property
    def height(self) -> int:
        return self.masks[0].height


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary 8-bit PGM (P5) into a ``(height, width)`` uint8 array."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    # header: magic, width, height, maxval; '#' comments allowed between tokens
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise MaskError(f"{path}: truncated PGM header")
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise MaskError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise MaskError(f"{path}: malformed PGM header") from exc
    if maxval > 255:
        raise MaskError(f"{path}: 16-bit PGM is not supported")
    pos += 1  # single whitespace byte after maxval
    body = data[pos : pos + width * height]
    if len(body) != width * height:
        raise MaskError(f"{path}: expected {width * height} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path: str | os.PathLike, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    h, w = labels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(labels.tobytes())


def load_mask(path: str | os.PathLike, frame_index: int | None = None) -> LabelMask:
    if not Path(path).is_file():
        raise MaskError(f"missing mask file {path}", frame_index)
    try:
        labels = read_pgm(path)
    except MaskError as exc:
        raise MaskError(str(exc), frame_index) from exc
    if labels.size and labels.max() >= N_CLASSES:
        raise MaskError(f"label value {int(labels.max())} outside 0..6 in {path}", frame_index)
    return LabelMask(labels)


def load_sequence(manifest_path: str | os.PathLike) -> FrameSequence:
    """Load and validate every frame named by a manifest; frames are sorted by time."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise MaskError(f"missing manifest {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise MaskError(f"{manifest_path}: invalid JSON ({exc})") from exc
    frames = doc.get("frames") or []
    if not frames:
        raise MaskError("no frames")
    if "mm_per_pixel" not in doc:
        raise MaskError(f"{manifest_path}: mm_per_pixel is required")
    base = manifest_path.parent
    order = sorted(range(len(frames)), key=lambda i: float(frames[i]["time_hours"]))
    masks, times = [], []
    shape = None
    for i in order:
        entry = frames[i]
        mask = load_mask(base / entry["file"], i)
        if shape is None:
            shape = mask.labels.shape
        elif mask.labels.shape != shape:
            raise MaskError(f"dimensions {mask.labels.shape} differ from {shape}", i)
        masks.append(mask)
        times.append(float(entry["time_hours"]))
    for k in range(1, len(times)):
        if times[k] == times[k - 1]:
            raise MaskError("duplicate timestamp", order[k])
    return FrameSequence(tuple(masks), np.array(times), float(doc["mm_per_pixel"]))


def write_sequence(
    directory: str | os.PathLike,
    frames: Iterable[np.ndarray],
    times: Sequence[float],
    mm_per_pixel: float,
    prefix: str = "frame",
) -> Path:
    """Write frames as PGMs plus ``manifest.json``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (labels, t) in enumerate(zip(frames, times)):
        name = f"{prefix}_{i:05d}.pgm"
        write_pgm(directory / name, labels)
        entries.append({"file": name, "time_hours": float(t)})
    manifest = directory / "manifest.json"
    manifest.write_text(json.dumps({"mm_per_pixel": mm_per_pixel, "frames": entries}, indent=1))
    return manifest


def crop(mask: LabelMask, roi: RoiSpec) -> LabelMask:
    roi.check_bounds(mask.width, mask.height)
    return LabelMask(mask.labels[roi.y : roi.y + roi.h, roi.x : roi.x + roi.w])


def class_mask(mask: LabelMask | np.ndarray, classes: Iterable[int]) -> np.ndarray:
    labels = mask.labels if isinstance(mask, LabelMask) else np.asarray(mask)
    lut = np.zeros(256, dtype=bool)
    for c in classes:
        lut[c] = True
    return lut[labels]
