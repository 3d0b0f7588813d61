"""Experiment configuration: one JSON document with per-module sections."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .mask_io import RoiSpec
from .tracking import GroupSpec, validate_groups

MODES = ("standard", "screening", "eval", "fpca")

DEFAULTS: dict = {
    "fusion": {"alpha": None, "threshold": 1.0, "min_component_px": 20},
    "skeleton": {"min_branch_px": 5},
    "graph": {"overlap_radius_px": 3.0, "lateral_tolerance_mm": 1.0, "snap_radius_px": None},
    "metrics": {
        "emergence_d_mm": 2.0,
        "persistence_hours": 6.0,
        "detrend_window_hours": 25.0,
        "fourier_min_samples": 16,
        "hull_every_hours": 24.0,
    },
    "fpca": {"basis": "monomial", "degree": 5, "grid_size": 100, "variance_target": 0.99, "max_components": 10},
    "tracking": {
        "min_area_px": 10,
        "max_age": 20,
        "min_hits": 3,
        "iou_threshold": 0.3,
        "touch_frames": 4,
        "v_max_mm": 1.0,
    },
    "screening": {"min_root_px": 3, "min_frames": 4, "margin_px": 10},
    "eval": {"tolerance_px": 3.0, "pairs": []},
    "report": {"days": None},
    "rsml": {"per_frame": False},
}

# (section, key): (low, high) inclusive bounds checked at load time
RANGES = {
    ("fusion", "threshold"): (0.0, math.inf),
    ("fusion", "min_component_px"): (0, math.inf),
    ("skeleton", "min_branch_px"): (0, math.inf),
    ("graph", "overlap_radius_px"): (0.0, math.inf),
    ("graph", "lateral_tolerance_mm"): (0.0, math.inf),
    ("metrics", "emergence_d_mm"): (0.0, math.inf),
    ("metrics", "persistence_hours"): (0.0, math.inf),
    ("metrics", "detrend_window_hours"): (0.0, math.inf),
    ("metrics", "fourier_min_samples"): (2, math.inf),
    ("metrics", "hull_every_hours"): (0.0, math.inf),
    ("fpca", "degree"): (0, 20),
    ("fpca", "grid_size"): (2, 100000),
    ("fpca", "variance_target"): (0.0, 1.0),
    ("fpca", "max_components"): (1, 1000),
    ("tracking", "min_area_px"): (1, math.inf),
    ("tracking", "max_age"): (0, math.inf),
    ("tracking", "min_hits"): (1, math.inf),
    ("tracking", "iou_threshold"): (0.0, 1.0),
    ("tracking", "touch_frames"): (1, math.inf),
    ("tracking", "v_max_mm"): (0.0, math.inf),
    ("screening", "min_root_px"): (1, math.inf),
    ("screening", "min_frames"): (1, math.inf),
    ("screening", "margin_px"): (0, math.inf),
    ("eval", "tolerance_px"): (0.0, math.inf),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str
    output: Path
    manifest: Path | None = None
    rois: list[RoiSpec] = field(default_factory=list)
    groups: list[GroupSpec] = field(default_factory=list)
    bundle: Path | None = None  # fpca mode: a previous standard or screening bundle
    settings: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    base_dir: Path = Path(".")

    def section(self, name: str) -> dict:
        return self.settings[name]


def _merge(defaults: dict, overrides: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {path}{key!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path}{key!r} must be an object")
            out[key] = _merge(defaults[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def _resolve(base: Path, value) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def parse_config(doc: dict, base_dir: Path = Path("."), mode: str | None = None, output=None) -> ExperimentConfig:
    """Validate a config document; ``mode`` and ``output`` override its fields."""
    doc = dict(doc)
    mode = mode or doc.pop("mode", None)
    doc.pop("mode", None)
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {mode!r}")
    out = output if output is not None else doc.pop("output", None)
    doc.pop("output", None)
    if out is None:
        raise ConfigError("no output directory (config 'output' or --out)")
    manifest = doc.pop("manifest", None)
    bundle = doc.pop("bundle", None)
    roi_docs = doc.pop("rois", [])
    group_docs = doc.pop("groups", [])
    settings = _merge(DEFAULTS, doc)
    for (sec, key), (lo, hi) in RANGES.items():
        v = settings[sec][key]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not lo <= v <= hi:
            raise ConfigError(f"{sec}.{key} = {v!r} outside [{lo}, {hi}]")
    alpha = settings["fusion"]["alpha"]
    if alpha is not None and not 0.0 <= alpha < 1.0:
        raise ConfigError(f"fusion.alpha = {alpha!r} outside [0, 1)")
    if not isinstance(settings["rsml"]["per_frame"], bool):
        raise ConfigError("rsml.per_frame must be true or false")
    if settings["fpca"]["basis"] not in ("monomial", "grid"):
        raise ConfigError("fpca.basis must be 'monomial' or 'grid'")

    try:
        rois = [
            RoiSpec(
                str(r["plant_id"]), int(r["x"]), int(r["y"]), int(r["w"]), int(r["h"]),
                tuple(r["seed_hint"]) if r.get("seed_hint") is not None else None,
                str(r.get("group", "default")),
            )
            for r in roi_docs
        ]
        groups = [
            GroupSpec(str(g["group_id"]), tuple(int(v) for v in g["region"]), g.get("expected_seed_count"))
            for g in group_docs
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid roi or group entry: {exc}") from None
    ids = [r.plant_id for r in rois]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate plant_id in rois")
    try:
        validate_groups(groups)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    cfg = ExperimentConfig(
        mode, _resolve(base_dir, out) if output is None else Path(out), _resolve(base_dir, manifest),
        rois, groups, _resolve(base_dir, bundle), settings, base_dir,
    )
    if mode in ("standard", "screening") and cfg.manifest is None:
        raise ConfigError(f"{mode} mode needs a manifest")
    if mode == "standard" and not rois:
        raise ConfigError("standard mode needs at least one ROI")
    if mode == "screening" and not groups:
        raise ConfigError("screening mode needs at least one group")
    if mode == "eval" and not settings["eval"]["pairs"]:
        raise ConfigError("eval mode needs eval.pairs")
    if mode == "fpca" and cfg.bundle is None:
        raise ConfigError("fpca mode needs a bundle directory")
    return cfg


def load_config(path, mode: str | None = None, output=None) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_config(doc, path.parent, mode, output)
