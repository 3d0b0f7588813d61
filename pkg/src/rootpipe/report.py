"""Report bundle emission: group summaries, comparisons, FPCA outputs.

Every number goes through :func:`fmt` (6 significant digits, ``NA`` for
missing values) and every listing is sorted, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fda import FunctionalPCA
from .metrics import MetricSeries
from .stats import GroupComparison, mann_whitney, significance_marker

NA = "NA"


def fmt(x) -> str:
    if x is None:
        return NA
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return NA
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    s = f"{x:.6g}"
    return "0" if s == "-0" else s


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _json_list(a) -> list:
    return [None if not math.isfinite(v) else float(fmt(v)) for v in np.asarray(a, dtype=float).ravel()]


@dataclass(frozen=True)
class PlantRecord:
    plant_id: str
    group: str
    series: dict[str, MetricSeries]  # post-processed, by metric name


def group_rows(metric: str, plants: list[PlantRecord]):
    """Rows ``time, group, n, mean, se`` over the plants that carry ``metric``."""
    rows = []
    for group in sorted({p.group for p in plants}):
        members = [p.series[metric] for p in plants if p.group == group and metric in p.series]
        if not members:
            rows.append([math.nan, group, 0, math.nan, math.nan])
            continue
        times = members[0].times
        values = np.full((len(members), len(times)), np.nan)
        for i, s in enumerate(members):
            values[i] = np.interp(times, s.times, s.values, left=np.nan, right=np.nan) if len(s) else np.nan
        for j, t in enumerate(times):
            v = values[:, j][np.isfinite(values[:, j])]
            n = len(v)
            mean = float(v.mean()) if n else math.nan
            se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else (0.0 if n == 1 else math.nan)
            rows.append([float(t), group, n, mean, se])
    rows.sort(key=lambda r: (r[0] if math.isfinite(r[0]) else math.inf, r[1]))
    return rows


def default_report_times(end_hours: float, days=None) -> list[float]:
    if days:
        return sorted({float(d) * 24.0 for d in days})
    times = [24.0 * k for k in range(1, int(end_hours // 24) + 1)]
    if not times or times[-1] < end_hours:
        times.append(float(end_hours))
    return times


def _value_at(series: MetricSeries, t: float) -> float:
    """Last sample at or before ``t``; NaN when none exists."""
    i = int(np.searchsorted(series.times, t + 1e-9, side="right")) - 1
    return float(series.values[i]) if i >= 0 else math.nan


def compare_groups(metric: str, plants: list[PlantRecord], report_times) -> list[GroupComparison]:
    groups = sorted({p.group for p in plants})
    out = []
    for t in report_times:
        samples = {
            g: np.array([_value_at(p.series[metric], t) for p in plants if p.group == g and metric in p.series])
            for g in groups
        }
        for ga, gb in itertools.combinations(groups, 2):
            a, b = samples[ga], samples[gb]
            a, b = a[np.isfinite(a)], b[np.isfinite(b)]
            if len(a) == 0 or len(b) == 0:
                out.append(GroupComparison(metric, t, ga, gb, len(a), len(b), math.nan, math.nan, NA))
                continue
            u, p, method = mann_whitney(a, b)
            out.append(GroupComparison(metric, t, ga, gb, len(a), len(b), u, p, method))
    return out


def write_comparisons(path: Path, comparisons: list[GroupComparison]) -> None:
    write_csv(
        path,
        ["metric", "time_hours", "group_a", "group_b", "n_a", "n_b", "u_statistic", "p_value", "method", "marker"],
        (
            [c.metric_name, c.time_hours, c.group_a, c.group_b, c.n_a, c.n_b, c.u_statistic, c.p_value,
             c.method, significance_marker(c.p_value)]
            for c in comparisons
        ),
    )


def summary_text(metrics: list[str], plants: list[PlantRecord], report_times, comparisons, warnings) -> str:
    lines = [
        "Group statistics at report times",
        "Values are post-processed (persistence-filtered, monotone lengths) before testing.",
        "Two-sided Mann-Whitney U; * p<0.05, ** p<0.001.",
        "",
    ]
    groups = sorted({p.group for p in plants})
    by_key = {(c.metric_name, c.time_hours): [] for c in comparisons}
    for c in comparisons:
        by_key[(c.metric_name, c.time_hours)].append(c)
    for metric in metrics:
        lines.append(f"[{metric}]")
        for t in report_times:
            lines.append(f"  t = {fmt(t)} h")
            for g in groups:
                v = np.array([_value_at(p.series[metric], t) for p in plants if p.group == g and metric in p.series])
                v = v[np.isfinite(v)]
                mean = v.mean() if len(v) else math.nan
                sd = v.std(ddof=1) if len(v) > 1 else (0.0 if len(v) == 1 else math.nan)
                lines.append(f"    {g}: n={len(v)} mean={fmt(mean)} sd={fmt(sd)}")
            for c in by_key.get((metric, t), []):
                lines.append(
                    f"    {c.group_a} vs {c.group_b}: U={fmt(c.u_statistic)} p={fmt(c.p_value)} "
                    f"{significance_marker(c.p_value)}".rstrip()
                )
        lines.append("")
    lines.append("Warnings")
    lines.extend(f"  {w}" for w in warnings) if warnings else lines.append("  none")
    return "\n".join(lines) + "\n"


def write_fpca(out_dir: Path, metric: str, plants: list[PlantRecord], settings: dict) -> list[str]:
    """FPCA of one metric across plants; returns warnings."""
    members = [p for p in plants if metric in p.series and len(p.series[metric]) > 0]
    if not members:
        return [f"fpca {metric}: no series"]
    series = [p.series[metric] for p in members]
    if any(not np.all(np.isfinite(s.values)) for s in series):
        series = [s.with_values(np.nan_to_num(s.values, nan=0.0)) for s in series]
    model = FunctionalPCA(
        basis=settings["basis"], degree=settings["degree"], grid_size=settings["grid_size"],
        variance_target=settings["variance_target"], max_components=settings["max_components"],
    )
    try:
        model.fit(series)
    except ValueError as exc:
        return [f"fpca {metric}: {exc}"]
    dec = model.decomposition_
    write_json(
        out_dir / f"{metric}.json",
        {
            "metric": metric,
            "basis": settings["basis"],
            "degree": dec.basis_degree,
            "grid_hours": _json_list(dec.grid_hours),
            "mean": _json_list(dec.mean_fn),
            "components": [_json_list(c) for c in dec.components],
            "explained_variance": _json_list(dec.explained_variance),
            "n_curves": len(series),
        },
    )
    r = dec.n_components
    write_csv(
        out_dir / f"{metric}_scores.csv",
        ["plant_id", "group"] + [f"pc{k + 1}" for k in range(r)],
        ([p.plant_id, p.group] + list(dec.scores[i]) for i, p in enumerate(members)),
    )
    return []


def write_group_reports(
    out: Path,
    plants: list[PlantRecord],
    metrics: list[str],
    fpca_metrics: list[str],
    fpca_settings: dict,
    report_times,
    warnings: list[str],
) -> None:
    for metric in metrics:
        write_csv(out / "metrics" / f"{metric}.csv", ["time_hours", "group", "n", "mean", "se"], group_rows(metric, plants))
    comparisons = [c for m in metrics for c in compare_groups(m, plants, report_times)]
    write_comparisons(out / "stats" / "comparisons.csv", comparisons)
    for metric in fpca_metrics:
        warnings.extend(write_fpca(out / "fpca", metric, plants, fpca_settings))
    (out / "stats").mkdir(parents=True, exist_ok=True)
    (out / "stats" / "summary.txt").write_text(
        summary_text(metrics, plants, report_times, comparisons, warnings), encoding="utf-8"
    )
