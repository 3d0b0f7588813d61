"""Mode runners: standard, screening, eval and fpca.

Each runner writes a bundle directory and returns a :class:`RunResult`.
Per-plant (or per-track) failures become warnings; other plants continue.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import report
from .config import ExperimentConfig
from .evaluation import evaluate
from .fusion import AccumulatorState, accumulate, clean_binary, default_alpha, fuse
from .graph import GraphError, LateralIdentityMap, build_graph, classify_main, match_laterals
from .mask_io import (
    CLASS_NAMES, LATERAL_ROOT, MAIN_ROOT, FrameSequence, RoiSpec, class_mask, crop, load_sequence,
)
from .metrics import (
    METRIC_UNITS, AngleRecord, AngleUndefined, MetricSeries, architecture_from_lengths, base_tip_angle,
    detrend, emergence_angle, enforce_monotone, fourier_components, growth_speed, hull_metrics_from_points,
    persistence_filter,
)
from .report import PlantRecord, fmt, write_csv, write_json
from .rsml import write_rsml
from .screening import cumulative_percent, detect_germination, fit_hill, hypocotyl_length, plant_measures
from .skeleton import prune_spurs, thin
from .tracking import SortTracker, detect, quality_control

log = logging.getLogger(__name__)

ARCH_METRICS = [
    "main_root_length", "lateral_root_length", "total_root_length",
    "lateral_root_count", "lateral_root_density", "main_over_total",
]
HULL_METRICS = ["convex_hull_area", "convex_hull_width", "convex_hull_height", "root_density", "aspect_ratio"]
SPEED_METRICS = ["main_root_length_speed", "lateral_root_length_speed", "total_root_length_speed"]
STANDARD_FPCA = ["main_root_length", "lateral_root_length", "total_root_length"]
SCREENING_METRICS = ["hypocotyl_length", "plant_area", "root_length"]


@dataclass
class RunResult:
    output: Path
    warnings: list[str] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)


@dataclass
class PlantResult:
    plant_id: str
    group: str
    series: dict[str, MetricSeries]  # post-processed
    raw: dict[str, MetricSeries]
    angles: list[AngleRecord]
    spectrum: list[tuple[float, float]]
    rsml: str | None
    warnings: list[str]
    frame_rsml: list[tuple[int, str]] = field(default_factory=list)


def thread_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("ROOTPIPE_THREADS")
    return max(1, int(env)) if env else 1


def _map(fn, items, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _series(pid, name, times, values, units=None) -> MetricSeries:
    return MetricSeries(pid, name, times, values, units or METRIC_UNITS.get(name, "mm"))


def analyze_plant(seq: FrameSequence, roi: RoiSpec, settings: dict) -> PlantResult:
    """Standard pipeline for one ROI: fuse, clean, thin, prune, graph, metrics, filters, RSML."""
    pid, mpp = roi.plant_id, seq.mm_per_pixel
    fus, gcfg, mcfg = settings["fusion"], settings["graph"], settings["metrics"]
    alpha = fus["alpha"] if fus["alpha"] is not None else default_alpha(seq.interval_hours)
    state = AccumulatorState(alpha)
    seed = None if roi.seed_hint is None else (roi.seed_hint[0] - roi.x, roi.seed_hint[1] - roi.y)
    snap = gcfg["snap_radius_px"] if gcfg["snap_radius_px"] is not None else math.inf
    identity = LateralIdentityMap(gcfg["lateral_tolerance_mm"])
    times = seq.times
    n = len(times)
    warnings: list[str] = []

    hull_every = mcfg["hull_every_hours"]
    bins = np.floor((times - times[0]) / hull_every + 1e-9).astype(int)
    hull_frames = {int(np.flatnonzero(bins == b)[-1]) for b in np.unique(bins)}

    main_len = np.zeros(n)
    lat_len: dict[int, np.ndarray] = {}
    lat_geom: dict[int, dict[int, tuple]] = {}
    hull_points: dict[int, np.ndarray] = {}
    prev_main = None
    per_frame = settings["rsml"]["per_frame"]
    frame_graphs = []  # (frame, graph, lateral ids) when exporting every frame
    last = None
    for i, mask in enumerate(seq.masks):
        m = crop(mask, roi)
        state = accumulate(state, m)
        binary = clean_binary(class_mask(fuse(state, m, fus["threshold"]), (MAIN_ROOT, LATERAL_ROOT)), fus["min_component_px"])
        if i in hull_frames:
            hull_points[i] = np.argwhere(binary)[:, ::-1] * mpp
        if not binary.any():
            continue
        skel = prune_spurs(thin(binary), settings["skeleton"]["min_branch_px"])
        try:
            graph = build_graph(skel, seed, mpp, snap, settings["skeleton"]["min_branch_px"])
        except GraphError as exc:
            warnings.append(f"plant {pid} frame {i}: {exc}")
            continue
        graph = classify_main(graph, prev_main, gcfg["overlap_radius_px"])
        prev_main = graph.main_polyline()
        laterals = graph.lateral_roots()
        identity = match_laterals(laterals, identity, mpp)
        main_len[i] = sum(e.length_mm for e in graph.edges_of_class("main"))
        ids = []
        for k, lat in enumerate(laterals):
            sid = identity.assignments[k]
            lat_len.setdefault(sid, np.zeros(n))[i] += lat.length_mm
            lat_geom.setdefault(sid, {})[i] = (lat.polyline, lat.base, lat.tip)
            ids.append(sid)
        if graph.edges:
            last = (i, graph, ids)
            if per_frame:
                frame_graphs.append(last)

    raw: dict[str, MetricSeries] = {}
    out: dict[str, MetricSeries] = {}
    raw["main_root_length"] = _series(pid, "main_root_length", times, main_len)
    mr = enforce_monotone(raw["main_root_length"]).values
    kept: dict[int, np.ndarray] = {}
    raw_lr = np.zeros(n)
    raw_count = np.zeros(n)
    for sid in sorted(lat_len):
        s = _series(pid, "lateral_root_length", times, lat_len[sid])
        raw_lr += s.values
        raw_count += s.values > 0
        filtered = enforce_monotone(persistence_filter(s, mcfg["persistence_hours"])).values
        if np.any(filtered > 0):
            kept[sid] = filtered
    raw["lateral_root_length"] = _series(pid, "lateral_root_length", times, raw_lr)
    raw["lateral_root_count"] = _series(pid, "lateral_root_count", times, raw_count)
    lr = np.sum(list(kept.values()), axis=0) if kept else np.zeros(n)
    count = np.sum([v > 0 for v in kept.values()], axis=0) if kept else np.zeros(n)
    arch = [architecture_from_lengths(mr[i], lr[i], int(count[i])) for i in range(n)]
    for name in ARCH_METRICS:
        out[name] = _series(pid, name, times, [a[name] for a in arch])

    if n >= 2:
        for name in ("main_root_length", "lateral_root_length", "total_root_length"):
            sp = growth_speed(out[name])
            out[sp.metric_name] = sp
    else:
        warnings.append(f"plant {pid}: single frame, growth speed and Fourier analysis skipped")

    spectrum: list[tuple[float, float]] = []
    if "main_root_length_speed" in out:
        try:
            detr = detrend(out["main_root_length_speed"], mcfg["detrend_window_hours"])
            spec = fourier_components(detr, mcfg["fourier_min_samples"])
            spectrum = list(zip(spec.periods.tolist(), spec.amplitudes.tolist()))
        except ValueError as exc:
            warnings.append(f"plant {pid}: Fourier analysis skipped ({exc})")

    hull_idx = sorted(hull_points)
    hull_rows = [hull_metrics_from_points(hull_points[i], arch[i]["total_root_length"]) for i in hull_idx]
    for name in HULL_METRICS:
        out[name] = _series(pid, name, times[hull_idx], [h[name] for h in hull_rows])

    angles = []
    d_mm = mcfg["emergence_d_mm"]
    for sid in sorted(kept):
        for i in sorted(lat_geom[sid]):
            if kept[sid][i] <= 0:
                continue
            polyline, base, tip = lat_geom[sid][i]
            try:
                bt = base_tip_angle(base, tip)
            except AngleUndefined:
                continue
            em = emergence_angle(polyline, d_mm, mpp)
            angles.append(AngleRecord(sid, float(times[i]), bt, math.nan if em is None else em, d_mm))

    def export(frame, graph, ids):
        try:
            return write_rsml(graph, pid, float(times[frame]), [s if s in kept else None for s in ids])
        except ValueError as exc:
            warnings.append(f"plant {pid} frame {frame}: RSML skipped ({exc})")
            return None

    rsml_text = None
    if last is not None:
        rsml_text = export(*last)
    else:
        warnings.append(f"plant {pid}: no root detected in any frame")
    frame_rsml = [(f, text) for f, g, ids in frame_graphs if (text := export(f, g, ids)) is not None]
    return PlantResult(pid, roi.group, out, raw, angles, spectrum, rsml_text, warnings, frame_rsml)


def _write_plant(out: Path, res: PlantResult) -> None:
    rows = []
    for kind, series in (("processed", res.series), ("raw", res.raw)):
        for name in sorted(series):
            s = series[name]
            rows.extend([kind, name, t, v, s.units] for t, v in zip(s.times, s.values))
    write_csv(out / "plants" / f"{res.plant_id}.csv", ["series", "metric", "time_hours", "value", "units"], rows)
    write_csv(
        out / "plants" / f"{res.plant_id}_angles.csv",
        ["lateral_track_id", "time_hours", "base_tip_deg", "emergence_deg", "d_mm"],
        ([a.lateral_track_id, a.time_hours, a.base_tip_deg, a.emergence_deg, a.d_mm] for a in res.angles),
    )
    write_csv(out / "plants" / f"{res.plant_id}_spectrum.csv", ["period_hours", "amplitude"], res.spectrum)
    if res.rsml is not None:
        (out / "rsml").mkdir(parents=True, exist_ok=True)
        (out / "rsml" / f"{res.plant_id}.rsml").write_text(res.rsml, encoding="utf-8")
    if res.frame_rsml:
        frame_dir = out / "rsml" / res.plant_id
        frame_dir.mkdir(parents=True, exist_ok=True)
        for frame, text in res.frame_rsml:
            (frame_dir / f"frame_{frame:05d}.rsml").write_text(text, encoding="utf-8")


def _finish(out: Path, plants: list[PlantRecord], metrics, fpca_metrics, cfg: ExperimentConfig, end_hours, warnings, extra=None):
    report_times = report.default_report_times(end_hours, cfg.section("report")["days"])
    report.write_group_reports(out, plants, metrics, fpca_metrics, cfg.section("fpca"), report_times, warnings)
    write_json(
        out / "index.json",
        {
            "mode": cfg.mode,
            "plants": [{"plant_id": p.plant_id, "group": p.group} for p in plants],
            "report_times_hours": [float(fmt(t)) for t in report_times],
            "warnings": warnings,
            **(extra or {}),
        },
    )
    files = sorted(p for p in out.rglob("*") if p.is_file())
    return RunResult(out, warnings, files)


def run_standard(cfg: ExperimentConfig, threads: int | None = None) -> RunResult:
    seq = load_sequence(cfg.manifest)
    for roi in cfg.rois:
        roi.check_bounds(seq.width, seq.height)
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)

    def work(roi):
        try:
            return analyze_plant(seq, roi, cfg.settings)
        except Exception as exc:  # one plant's failure must not stop the others
            log.exception("plant %s failed", roi.plant_id)
            return f"plant {roi.plant_id}: skipped ({type(exc).__name__}: {exc})"

    results = _map(work, list(cfg.rois), thread_count(threads))
    warnings: list[str] = []
    plants = []
    for res in results:
        if isinstance(res, str):
            warnings.append(res)
            continue
        warnings.extend(res.warnings)
        _write_plant(out, res)
        plants.append(PlantRecord(res.plant_id, res.group, res.series))
    metrics = ARCH_METRICS + [m for m in SPEED_METRICS if any(m in p.series for p in plants)] + HULL_METRICS
    return _finish(out, plants, metrics, STANDARD_FPCA, cfg, float(seq.times[-1]), warnings)


def _track_boxes(history, n_frames: int) -> dict[int, list]:
    boxes: dict[int, list] = {}
    for s in history:
        boxes.setdefault(s.track_id, [None] * n_frames)[s.frame] = s.bbox
    return boxes


def run_screening(cfg: ExperimentConfig, threads: int | None = None) -> RunResult:
    seq = load_sequence(cfg.manifest)
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    tcfg, scfg = cfg.section("tracking"), cfg.section("screening")
    mpp, times, n = seq.mm_per_pixel, seq.times, len(seq)
    tracker = SortTracker(tcfg["max_age"], tcfg["min_hits"], tcfg["iou_threshold"])
    history = []
    for i, mask in enumerate(seq.masks):
        history.extend(tracker.step(detect(mask, tcfg["min_area_px"]), i))
    qc = quality_control(history, mpp, tcfg["touch_frames"], tcfg["v_max_mm"])
    boxes = _track_boxes(history, n)
    warnings: list[str] = []

    group_of: dict[int, str] = {}
    for tid in sorted(boxes):
        first = next(b for b in boxes[tid] if b is not None)
        group = next((g.group_id for g in cfg.groups if g.contains(first[0], first[1])), None)
        if group is None:
            warnings.append(f"track {tid}: outside every group region, ignored")
            continue
        group_of[tid] = group
        stop = qc[tid].excluded_from
        if stop is not None:
            warnings.append(f"track {tid}: {', '.join(sorted(qc[tid].flags))} from frame {stop}, later frames excluded")
            boxes[tid][stop:] = [None] * (n - stop)

    def work(tid):
        try:
            return tid, _measure_track(seq, boxes[tid], scfg)
        except Exception as exc:
            log.exception("track %s failed", tid)
            return tid, f"track {tid}: skipped ({type(exc).__name__}: {exc})"

    measured = _map(work, sorted(group_of), thread_count(threads))
    plants = []
    germ_times: dict[str, dict[int, float]] = {g.group_id: {} for g in cfg.groups}
    for tid, res in measured:
        if isinstance(res, str):
            warnings.append(res)
            continue
        germ, series, raw_hyp, seed_size = res
        if germ is not None:
            germ_times[group_of[tid]][tid] = germ
        pid = f"track{tid}"
        ps = {name: _series(pid, name, times, vals, units) for name, (vals, units) in series.items()}
        plants.append(PlantRecord(pid, group_of[tid], ps))
        rows = [["processed", name, t, v, s.units] for name, s in sorted(ps.items()) for t, v in zip(s.times, s.values)]
        rows += [["raw", "hypocotyl_length", t, v, "mm"] for t, v in zip(times, raw_hyp)]
        rows += [["processed", "seed_size", times[0], seed_size, "mm²"]]
        rows += [["processed", "germination_time", times[0], germ, "hours"]]
        write_csv(out / "plants" / f"{pid}.csv", ["series", "metric", "time_hours", "value", "units"], rows)

    write_csv(
        out / "tracks" / "tracks.csv",
        ["frame", "time_hours", "track_id", "group_id", "cx", "cy", "w", "h", "flags"],
        (
            [s.frame, times[s.frame], s.track_id, group_of.get(s.track_id, "NA"), *s.bbox,
             ";".join(f for f in sorted(qc[s.track_id].flags) if _flag_active(qc[s.track_id], f, s.frame))]
            for s in sorted(history, key=lambda s: (s.frame, s.track_id))
        ),
    )

    summary = {}
    tracks_per_group = {g: sum(1 for t in group_of.values() if t == g) for g in germ_times}
    for g in cfg.groups:
        total = g.expected_seed_count or tracks_per_group[g.group_id]
        if total < 1:
            warnings.append(f"group {g.group_id}: no seeds")
            continue
        events = germ_times[g.group_id]
        fit = fit_hill(list(events.values()), total, float(times[-1]), times, dict(events))
        empirical = cumulative_percent(list(events.values()), total, times)
        write_csv(
            out / "screening" / f"germination_{g.group_id}.csv",
            ["time_hours", "empirical_percent", "fitted_percent"],
            ([t, e, f] for t, e, f in zip(times, empirical, fit.curve(times) if fit.fitted else [math.nan] * n)),
        )
        summary[g.group_id] = {
            "g0": fit.g0, "g_max": fit.g_max, "n": fit.n, "t50": fit.t50, "tmgr": fit.tmgr,
            "rmse": fit.rmse, "final_percent": fit.final_percent, "total_seeds": total,
            "fitted": fit.fitted,
        }
        if not fit.fitted:
            warnings.append(f"group {g.group_id}: no germination events, Hill fit skipped")
    write_json(
        out / "screening" / "germination.json",
        {g: {k: (float(fmt(v)) if isinstance(v, float) and math.isfinite(v) else (None if isinstance(v, float) else v))
             for k, v in d.items()} for g, d in summary.items()},
    )
    return _finish(out, plants, SCREENING_METRICS, ["hypocotyl_length"], cfg, float(times[-1]), warnings)


def _flag_active(q, flag: str, frame: int) -> bool:
    start = q.touching_from if flag == "touching" else q.abnormal_motion_from
    return start is not None and frame >= start


def _measure_track(seq: FrameSequence, boxes, scfg):
    mpp, margin = seq.mm_per_pixel, scfg["margin_px"]
    germ = detect_germination(boxes, seq.masks, seq.times, scfg["min_root_px"], scfg["min_frames"], margin)
    n = len(seq)
    hyp = np.full(n, np.nan)
    area = np.full(n, np.nan)
    root = np.full(n, np.nan)
    seed_size = math.nan
    first = True
    for i, (bbox, mask) in enumerate(zip(boxes, seq.masks)):
        if bbox is None:
            continue
        hyp[i] = hypocotyl_length(mask, bbox, mpp, margin)
        pm = plant_measures(mask, bbox, mpp, margin)
        area[i], root[i] = pm["plant_area"], pm["root_length"]
        if first:
            seed_size, first = pm["seed_size"], False
    raw_hyp = hyp.copy()
    hyp_clean = enforce_monotone(_series("t", "hypocotyl_length", seq.times, hyp)).values
    series = {
        "hypocotyl_length": (hyp_clean, "mm"),
        "plant_area": (area, "mm²"),
        "root_length": (root, "mm"),
    }
    return germ, series, raw_hyp, seed_size


def run_eval(cfg: ExperimentConfig) -> RunResult:
    ecfg = cfg.section("eval")
    out = cfg.output
    rows = []
    for k, pair in enumerate(ecfg["pairs"]):
        pred = load_sequence(cfg.base_dir / pair["prediction"])
        truth = load_sequence(cfg.base_dir / pair["truth"])
        if len(pred) != len(truth):
            raise ValueError(f"pair {k}: {len(pred)} prediction frames vs {len(truth)} truth frames")
        mpp = truth.mm_per_pixel
        for i, (p, t) in enumerate(zip(pred.masks, truth.masks)):
            if p.labels.shape != t.labels.shape:
                raise ValueError(f"pair {k} frame {i}: shape mismatch")
            for c in range(1, len(CLASS_NAMES)):
                res = evaluate(p.labels == c, t.labels == c, mpp, ecfg["tolerance_px"], thin)
                rows.append([f"{k}:{i}", CLASS_NAMES[c], res.dice, res.hausdorff_mm, res.completeness, res.correctness])
    write_csv(out / "eval" / "eval.csv", ["image_id", "class", "dice", "hausdorff_mm", "completeness", "correctness"], rows)
    return RunResult(out, [], [out / "eval" / "eval.csv"])


def _read_plant_csv(path: Path) -> dict[str, MetricSeries]:
    by_metric: dict[str, list] = {}
    units: dict[str, str] = {}
    with path.open(encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["series"] != "processed":
                continue
            v = math.nan if row["value"] == report.NA else float(row["value"])
            by_metric.setdefault(row["metric"], []).append((float(row["time_hours"]), v))
            units[row["metric"]] = row["units"]
    out = {}
    for name, pairs in by_metric.items():
        if len(pairs) < 2:
            continue
        t, v = zip(*sorted(pairs))
        out[name] = MetricSeries(path.stem, name, np.array(t), np.array(v), units[name])
    return out


def run_fpca(cfg: ExperimentConfig) -> RunResult:
    """FPCA of every per-plant metric in an existing bundle."""
    index = json.loads((cfg.bundle / "index.json").read_text(encoding="utf-8"))
    plants = []
    for entry in index["plants"]:
        series = _read_plant_csv(cfg.bundle / "plants" / f"{entry['plant_id']}.csv")
        plants.append(PlantRecord(entry["plant_id"], entry["group"], series))
    metrics = sorted({m for p in plants for m in p.series})
    warnings: list[str] = []
    out = cfg.output
    for metric in metrics:
        warnings.extend(report.write_fpca(out / "fpca", metric, plants, cfg.section("fpca")))
    write_json(out / "fpca" / "index.json", {"metrics": metrics, "warnings": warnings})
    return RunResult(out, warnings, sorted(p for p in (out / "fpca").iterdir()))
