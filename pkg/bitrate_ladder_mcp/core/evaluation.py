"""Ladder comparison: Bjontegaard deltas, decode-time delta and distributions.

BD values are computed on monotone piecewise-cubic (PCHIP) interpolants of
each ladder's rate-quality samples (linear when only two remain), cut to the
overlap of the two curves and integrated over it in closed form.
Rates enter as log10(kbps).
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple
import csv
import math
import os
import pathlib

import numpy as np
from scipy.interpolate import PchipInterpolator, make_interp_spline

from .api import (
    DataError,
    EmptyInputError,
    InsufficientSamplesError,
    OverlapError,
    SequenceMismatchError,
    UsageError,
)
from .config import QUALITY_METRICS
from .ladders import Ladder
from .utils import format_float, logger

# Histogram fields and the EncodePoint attribute each one reads
DISTRIBUTION_FIELDS: Dict[str, str] = {
    "decode_time": "decode_time_s",
    "bitrate": "bitrate_kbps",
    "psnr": "psnr",
    "xpsnr": "xpsnr",
    "vmaf": "vmaf",
}

TABLE_COLUMNS: Tuple[Tuple[str, str, str, bool], ...] = (
    # (title, unit, key, lower_is_better)
    ("BDR_P", "[%]", "bdr_psnr", True),
    ("BDR_X", "[%]", "bdr_xpsnr", True),
    ("BDR_V", "[%]", "bdr_vmaf", True),
    ("BD-PSNR", "[dB]", "bdq_psnr", False),
    ("BD-XPSNR", "[dB]", "bdq_xpsnr", False),
    ("BD-VMAF", "", "bdq_vmaf", False),
    ("dT_D", "[%]", "delta_t_d", True),
)


class RateQualityCurve:
    """(log10 bitrate, quality) samples of a ladder's present rungs for one metric."""

    def __init__(self, samples: Iterable[Tuple[float, float]]):
        self.samples: Tuple[Tuple[float, float], ...] = tuple(sorted(set(samples)))

    def __len__(self) -> int:
        return len(self.samples)

    @classmethod
    def from_ladder(cls, ladder: Ladder, quality_metric: str) -> "RateQualityCurve":
        return cls(
            (math.log10(p.bitrate_kbps), p.quality(quality_metric))
            for p in ladder.selected_points()
        )

    @classmethod
    def from_rates(cls, rates_kbps: Sequence[float], qualities: Sequence[float]) -> "RateQualityCurve":
        return cls(zip((math.log10(r) for r in rates_kbps), qualities))

    def rate_over_quality(self) -> Tuple[np.ndarray, np.ndarray]:
        """Quality as abscissa; for repeated quality the lowest rate is kept."""
        best: Dict[float, float] = {}
        for log_rate, quality in self.samples:
            best[quality] = min(log_rate, best.get(quality, math.inf))
        x = np.array(sorted(best))
        return x, np.array([best[q] for q in x])

    def quality_over_rate(self) -> Tuple[np.ndarray, np.ndarray]:
        """Log rate as abscissa; for repeated rate the highest quality is kept."""
        best: Dict[float, float] = {}
        for log_rate, quality in self.samples:
            best[log_rate] = max(quality, best.get(log_rate, -math.inf))
        x = np.array(sorted(best))
        return x, np.array([best[r] for r in x])


def interpolant(x: np.ndarray, y: np.ndarray):
    """Monotone cubic through (x, y); linear for two samples."""
    if len(x) < 2:
        raise InsufficientSamplesError(f"need at least 2 distinct samples, got {len(x)}")
    if len(x) == 2:
        return make_interp_spline(x, y, k=1)
    return PchipInterpolator(x, y, extrapolate=False)


def overlap(x_a: np.ndarray, x_b: np.ndarray, axis: str) -> Tuple[float, float]:
    low = max(float(x_a[0]), float(x_b[0]))
    high = min(float(x_a[-1]), float(x_b[-1]))
    if not high > low:
        raise OverlapError(f"curves do not overlap in {axis}", {"interval": [low, high]})
    return low, high


def clip_to_overlap(x: np.ndarray, y: np.ndarray, low: float, high: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Samples strictly inside (low, high) plus both bounds.

    Bound values are linear between the samples either side, so samples further
    out than those neighbours never reach the interpolant.
    """
    inside = (x > low) & (x < high)
    xs = np.concatenate(([low], x[inside], [high]))
    ys = np.concatenate(([np.interp(low, x, y)], y[inside], [np.interp(high, x, y)]))
    return xs, ys


def _mean_difference(method_xy, reference_xy, axis: str) -> float:
    (xm, ym), (xr, yr) = method_xy, reference_xy
    if len(xm) < 2 or len(xr) < 2:
        raise InsufficientSamplesError(f"need at least 2 distinct samples, got {min(len(xm), len(xr))}")
    low, high = overlap(xm, xr, axis)
    f_method = interpolant(*clip_to_overlap(xm, ym, low, high))
    f_reference = interpolant(*clip_to_overlap(xr, yr, low, high))
    integral_method = float(f_method.integrate(low, high))
    integral_reference = float(f_reference.integrate(low, high))
    return (integral_method - integral_reference) / (high - low)


def bd_rate(method: RateQualityCurve, reference: RateQualityCurve) -> float:
    """Average bitrate difference at equal quality, in percent (negative = savings)."""
    d = _mean_difference(method.rate_over_quality(), reference.rate_over_quality(), "quality")
    return (10.0 ** d - 1.0) * 100.0


def bd_quality(method: RateQualityCurve, reference: RateQualityCurve) -> float:
    """Average quality difference at equal bitrate, in the metric's units."""
    return _mean_difference(method.quality_over_rate(), reference.quality_over_rate(), "log10 bitrate")


def delta_decode_time(method: Ladder, reference: Ladder) -> float:
    """Percent change of summed decode time over present rungs versus the reference."""
    if method.sequence != reference.sequence:
        raise SequenceMismatchError(
            f"cannot compare ladders of {method.sequence} and {reference.sequence}"
        )
    method_points, reference_points = method.selected_points(), reference.selected_points()
    if not method_points:
        raise EmptyInputError(f"{method.label} ladder for {method.sequence} has no present rungs")
    if not reference_points:
        raise EmptyInputError(f"{reference.label} ladder for {reference.sequence} has no present rungs")
    total_method = math.fsum(p.decode_time_s for p in method_points)
    total_reference = math.fsum(p.decode_time_s for p in reference_points)
    return (total_method - total_reference) / total_reference * 100.0


@dataclass
class ComparisonReport:
    """BD and decode-time deltas of one method against one reference."""
    method: str
    reference: str
    method_name: str = ""
    reference_name: str = ""
    sequence: Optional[str] = None
    bdr: Dict[str, Optional[float]] = field(default_factory=dict)
    bd_quality: Dict[str, Optional[float]] = field(default_factory=dict)
    delta_t_d: Optional[float] = None
    sequences_included: int = 0
    absent_rungs: int = 0
    sequences_skipped: List[Dict[str, str]] = field(default_factory=list)
    metric_counts: Dict[str, int] = field(default_factory=dict)

    def value(self, key: str) -> Optional[float]:
        """Look up a table column key such as 'bdr_xpsnr' or 'delta_t_d'."""
        if key == "delta_t_d":
            return self.delta_t_d
        kind, metric = key.split("_", 1)
        return (self.bdr if kind == "bdr" else self.bd_quality).get(metric)

    def to_json(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "method_name": self.method_name,
            "reference": self.reference,
            "reference_name": self.reference_name,
            "sequence": self.sequence,
            "bdr": self.bdr,
            "bd_quality": self.bd_quality,
            "delta_t_d": self.delta_t_d,
            "sequences_included": self.sequences_included,
            "absent_rungs": self.absent_rungs,
            "sequences_skipped": self.sequences_skipped,
            "metric_counts": self.metric_counts,
        }


def compare_ladders(
    method: Ladder,
    reference: Ladder,
    metrics: Sequence[str] = QUALITY_METRICS,
) -> ComparisonReport:
    """Per-sequence report; metrics that cannot be computed are recorded as skipped."""
    if method.sequence != reference.sequence:
        raise SequenceMismatchError(f"cannot compare ladders of {method.sequence} and {reference.sequence}")
    report = ComparisonReport(
        method=method.label,
        reference=reference.label,
        method_name=method.display_name,
        reference_name=reference.display_name,
        sequence=method.sequence,
    )
    report.absent_rungs = len(method.rungs) - len(method.present())
    if report.absent_rungs:
        logger.warning(f"{method.sequence}: {method.label} ladder has {report.absent_rungs} absent rungs")

    def attempt(key: str, compute: Callable[[], float]) -> Optional[float]:
        try:
            value = compute()
        except DataError as e:
            report.sequences_skipped.append({"sequence": method.sequence, "metric": key, "reason": e.message})
            logger.warning(f"{method.sequence}: {key} skipped for {method.label} vs {reference.label}: {e.message}")
            return None
        report.metric_counts[key] = 1
        return value

    def curves(metric: str) -> Tuple[RateQualityCurve, RateQualityCurve]:
        return RateQualityCurve.from_ladder(method, metric), RateQualityCurve.from_ladder(reference, metric)

    for metric in metrics:
        report.bdr[metric] = attempt(f"bdr_{metric}", lambda: bd_rate(*curves(metric)))
        report.bd_quality[metric] = attempt(f"bdq_{metric}", lambda: bd_quality(*curves(metric)))
    report.delta_t_d = attempt("delta_t_d", lambda: delta_decode_time(method, reference))

    computed_bd = any(v is not None for v in list(report.bdr.values()) + list(report.bd_quality.values()))
    report.sequences_included = 1 if computed_bd else 0
    return report


def aggregate_report(per_sequence: Sequence[ComparisonReport]) -> ComparisonReport:
    """Mean of every metric over the sequences where it could be computed."""
    if not per_sequence:
        raise EmptyInputError("Cannot aggregate an empty collection of reports")
    first = per_sequence[0]
    for report in per_sequence:
        if (report.method, report.reference) != (first.method, first.reference):
            raise DataError(
                f"cannot aggregate {report.method} vs {report.reference} with {first.method} vs {first.reference}"
            )

    def mean(values: List[Optional[float]]) -> Tuple[Optional[float], int]:
        present = [v for v in values if v is not None]
        if not present:
            return None, 0
        return math.fsum(present) / len(present), len(present)

    aggregate = ComparisonReport(
        method=first.method,
        reference=first.reference,
        method_name=first.method_name,
        reference_name=first.reference_name,
    )
    metrics = sorted({m for r in per_sequence for m in list(r.bdr) + list(r.bd_quality)},
                     key=lambda m: QUALITY_METRICS.index(m) if m in QUALITY_METRICS else len(QUALITY_METRICS))
    for metric in metrics:
        aggregate.bdr[metric], aggregate.metric_counts[f"bdr_{metric}"] = mean([r.bdr.get(metric) for r in per_sequence])
        aggregate.bd_quality[metric], aggregate.metric_counts[f"bdq_{metric}"] = mean(
            [r.bd_quality.get(metric) for r in per_sequence]
        )
    aggregate.delta_t_d, aggregate.metric_counts["delta_t_d"] = mean([r.delta_t_d for r in per_sequence])
    aggregate.sequences_included = sum(r.sequences_included for r in per_sequence)
    aggregate.absent_rungs = sum(r.absent_rungs for r in per_sequence)
    for report in per_sequence:
        aggregate.sequences_skipped.extend(report.sequences_skipped)
        if not report.sequences_included and report.sequence is not None:
            aggregate.sequences_skipped.append(
                {"sequence": report.sequence, "metric": "all", "reason": "no BD metric could be computed"}
            )
    return aggregate


def render_table(reports: Sequence[ComparisonReport], marks: bool = True) -> str:
    """
    Text table with one row per method and one column per BD / decode-time metric.

    With marks, the best value of each column is wrapped in ** and the second
    best in _ (lower is better for rate and decode time, higher for quality).
    """
    cells: List[List[str]] = []
    for report in reports:
        cells.append([
            "n/a" if report.value(key) is None else f"{report.value(key):.2f}"
            for _, _, key, _ in TABLE_COLUMNS
        ])

    if marks:
        for column, (_, _, key, lower_is_better) in enumerate(TABLE_COLUMNS):
            ranked = sorted(
                (i for i, r in enumerate(reports) if r.value(key) is not None),
                key=lambda i: reports[i].value(key) if lower_is_better else -reports[i].value(key),
            )
            if len(ranked) >= 2:
                cells[ranked[0]][column] = f"**{cells[ranked[0]][column]}**"
            if len(ranked) >= 3:
                cells[ranked[1]][column] = f"_{cells[ranked[1]][column]}_"

    names = [r.method_name or r.method for r in reports]
    reference = reports[0].reference_name if reports else ""
    head = ["Method"] + [title for title, _, _, _ in TABLE_COLUMNS]
    units = [f"vs {reference}" if reference else ""] + [unit for _, unit, _, _ in TABLE_COLUMNS]
    rows = [head, units] + [[name] + row for name, row in zip(names, cells)]
    widths = [max(len(row[i]) for row in rows) for i in range(len(head))]

    def line(row: List[str]) -> str:
        first = row[0].ljust(widths[0])
        rest = " | ".join(cell.rjust(widths[i + 1]) for i, cell in enumerate(row[1:]))
        return f"{first} || {rest}".rstrip()

    rule = "=" * len(line(head))
    out = [rule, line(head), line(units), rule]
    out.extend(line(row) for row in rows[2:])
    out.append(rule)
    return "\n".join(out) + "\n"


@dataclass
class Histogram:
    """Normalised histogram: densities sum to 1 over the bins."""
    field: str
    edges: List[float]
    densities: List[float]
    stats: Dict[str, float]

    def bins(self) -> List[Tuple[float, float, float]]:
        return [(self.edges[i], self.edges[i + 1], d) for i, d in enumerate(self.densities)]

    def to_json(self) -> Dict[str, Any]:
        return {
            "field": self.field,
            "bins": [{"bin_left": l, "bin_right": r, "density": d} for l, r, d in self.bins()],
            "stats": self.stats,
        }


def distribution_summary(ladders: Iterable[Ladder], field: str, bins: int) -> Histogram:
    """Histogram of one field pooled over every present rung of the ladders."""
    if field not in DISTRIBUTION_FIELDS:
        raise UsageError(f"Unknown distribution field: {field}", {"allowed": sorted(DISTRIBUTION_FIELDS)})
    if not isinstance(bins, int) or bins < 1:
        raise UsageError("bins must be a positive integer")
    attribute = DISTRIBUTION_FIELDS[field]

    values = []
    for ladder in ladders:
        for point in ladder.selected_points():
            value = getattr(point, attribute)
            if value is None:
                raise DataError(
                    f"field {field} is missing on a rung of the {ladder.label} ladder for {ladder.sequence}",
                    {"field": field, "sequence": ladder.sequence, "method": ladder.label},
                )
            values.append(float(value))
    if not values:
        raise EmptyInputError(f"No present rungs to summarise for {field}")

    data = np.array(values)
    stats = {
        "count": float(len(data)),
        "min": float(data.min()),
        "max": float(data.max()),
        "mean": float(data.mean()),
        "median": float(np.median(data)),
    }
    if stats["min"] == stats["max"]:
        return Histogram(field, [stats["min"], stats["max"]], [1.0], stats)

    counts, edges = np.histogram(data, bins=bins)
    densities = (counts / counts.sum()).tolist()
    return Histogram(field, [float(e) for e in edges], [float(d) for d in densities], stats)


def write_histogram_csv(histogram: Histogram, path: os.PathLike, run_manifest: Optional[str] = None) -> pathlib.Path:
    """Write `bin_left,bin_right,density` with summary statistics as directive lines."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        if run_manifest:
            handle.write(f"# run_manifest={run_manifest}\n")
        handle.write(f"# field={histogram.field}\n")
        for key, value in histogram.stats.items():
            handle.write(f"# {key}={format_float(value)}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["bin_left", "bin_right", "density"])
        for left, right, density in histogram.bins():
            writer.writerow([format_float(left), format_float(right), format_float(density)])
    logger.info(f"Wrote {path}")
    return path
