"""Composite objective, Pareto dominance and front extraction.

Two objective spaces are supported:

* ``mv``: minimise M = alpha*log10(decode time) + (1 - alpha)*log10(bitrate)
  while maximising quality v.
* ``3d``: minimise decode time and bitrate, maximise quality.

Dominance is weak dominance with at least one strict inequality, compared
exactly (no epsilon). Points with identical objective vectors collapse to one
representative: lower QP first, then lower resolution.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Union
import math

import numpy as np

from .api import EmptyInputError, UsageError
from .measurements import EncodePoint, MeasurementSet, check_metric
from .utils import logger

SPACE_MV = "mv"
SPACE_3D = "3d"


@dataclass(frozen=True)
class Alpha:
    """Weight of log decode time in the composite objective."""
    value: float

    def __post_init__(self):
        if not (isinstance(self.value, (int, float)) and 0.0 <= self.value <= 1.0):
            raise UsageError(
                f"alpha must lie within [0, 1], got {self.value}",
                {"constraint": "0 <= alpha <= 1 for the composite rate/decode-time objective"},
            )

    def __float__(self) -> float:
        return float(self.value)


AlphaLike = Union[Alpha, float]


def as_alpha(alpha: AlphaLike) -> Alpha:
    return alpha if isinstance(alpha, Alpha) else Alpha(float(alpha))


@dataclass(frozen=True)
class ObjectiveVector:
    """A point projected onto the (M, v) plane."""
    m: float
    v: float
    source: EncodePoint


@dataclass(frozen=True)
class ObjectiveSpace:
    kind: str
    quality_metric: str
    alpha: Optional[float] = None

    def label(self) -> str:
        if self.kind == SPACE_MV:
            return f"MV({self.alpha}, {self.quality_metric})"
        return f"TBV({self.quality_metric})"


@dataclass(frozen=True)
class ParetoFront:
    """Non-dominated points under one objective space."""
    points: tuple
    space: ObjectiveSpace

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def keys(self) -> set:
        return {p.key for p in self.points}

    def to_json(self, sequence: str, run_manifest: Optional[str] = None) -> Dict[str, Any]:
        header: Dict[str, Any] = {
            "alpha": self.space.alpha,
            "quality_metric": self.space.quality_metric,
            "objective_space": self.space.kind,
            "sequence": sequence,
        }
        if run_manifest:
            header["run_manifest"] = run_manifest
        rows = []
        for point in self.points:
            rows.append({
                "resolution": point.resolution,
                "qp": point.qp,
                "bitrate_kbps": point.bitrate_kbps,
                "decode_time_s": point.decode_time_s,
                "quality": point.quality(self.space.quality_metric),
                "m": None if self.space.alpha is None else composite_metric(point, self.space.alpha),
            })
        return {"header": header, "points": rows}


def composite_metric(point: EncodePoint, alpha: AlphaLike) -> float:
    """M = alpha*log10(decode_time_s) + (1 - alpha)*log10(bitrate_kbps)."""
    a = as_alpha(alpha).value
    return a * math.log10(point.decode_time_s) + (1.0 - a) * math.log10(point.bitrate_kbps)


def dominates_3d(a: EncodePoint, b: EncodePoint, quality_metric: str) -> bool:
    """True if a is no worse than b in decode time, bitrate and quality, and better in one."""
    va, vb = a.quality(quality_metric), b.quality(quality_metric)
    no_worse = a.decode_time_s <= b.decode_time_s and a.bitrate_kbps <= b.bitrate_kbps and va >= vb
    strictly_better = a.decode_time_s < b.decode_time_s or a.bitrate_kbps < b.bitrate_kbps or va > vb
    return no_worse and strictly_better


def dominates_mv(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    """True if a has no larger M and no lower quality than b, and differs in one."""
    return a.m <= b.m and a.v >= b.v and (a.m < b.m or a.v > b.v)


def objective_vectors(measurement_set: MeasurementSet, alpha: AlphaLike, quality_metric: str) -> List[ObjectiveVector]:
    alpha = as_alpha(alpha)
    return [
        ObjectiveVector(composite_metric(p, alpha), p.quality(quality_metric), p)
        for p in measurement_set.points
    ]


def _require_points(points: Sequence[EncodePoint], name: str) -> None:
    if not points:
        raise EmptyInputError(f"Cannot extract a Pareto front from an empty set ({name})")


def pareto_front_mv(measurement_set: MeasurementSet, alpha: AlphaLike, quality_metric: str) -> ParetoFront:
    """
    Front in the (M, v) plane, as a staircase of strictly increasing M and v.

    Args:
        measurement_set: Points of one sequence
        alpha: Weight of log decode time in M
        quality_metric: psnr, xpsnr or vmaf

    Returns:
        ParetoFront ordered by increasing M
    """
    check_metric(quality_metric)
    _require_points(measurement_set.points, measurement_set.name)
    alpha = as_alpha(alpha)
    vectors = objective_vectors(measurement_set, alpha, quality_metric)

    # Increasing m; within equal m the best quality first, then the tie-break
    vectors.sort(key=lambda o: (o.m, -o.v, o.source.qp, o.source.resolution))
    front = []
    best_v = -math.inf
    for vector in vectors:
        if vector.v > best_v:
            front.append(vector.source)
            best_v = vector.v

    logger.debug(
        f"MV front for {measurement_set.name} (alpha={alpha.value}, {quality_metric}): "
        f"{len(front)} / {len(vectors)} points"
    )
    return ParetoFront(tuple(front), ObjectiveSpace(SPACE_MV, quality_metric, alpha.value))


def _collapse_duplicates(points: Sequence[EncodePoint], quality_metric: str) -> List[EncodePoint]:
    """Keep one point per identical (decode time, bitrate, quality) vector."""
    representatives = {}
    for point in sorted(points, key=lambda p: (p.qp, p.resolution)):
        vector = (point.decode_time_s, point.bitrate_kbps, point.quality(quality_metric))
        representatives.setdefault(vector, point)
    return list(representatives.values())


def pareto_front_3d(measurement_set: MeasurementSet, quality_metric: str) -> ParetoFront:
    """
    Front in the full (decode time, bitrate, quality) space.

    Returns:
        ParetoFront ordered by increasing bitrate, then decode time
    """
    check_metric(quality_metric)
    _require_points(measurement_set.points, measurement_set.name)
    candidates = _collapse_duplicates(measurement_set.points, quality_metric)

    t = np.array([p.decode_time_s for p in candidates])
    b = np.array([p.bitrate_kbps for p in candidates])
    v = np.array([p.quality(quality_metric) for p in candidates])

    # no_worse[j, i]: candidate j is at least as good as candidate i everywhere
    no_worse = (t[:, None] <= t[None, :]) & (b[:, None] <= b[None, :]) & (v[:, None] >= v[None, :])
    better = (t[:, None] < t[None, :]) | (b[:, None] < b[None, :]) | (v[:, None] > v[None, :])
    dominated = np.any(no_worse & better, axis=0)

    front = [p for p, is_dominated in zip(candidates, dominated) if not is_dominated]
    front.sort(key=lambda p: (p.bitrate_kbps, p.decode_time_s, -p.quality(quality_metric), p.qp, p.resolution))

    logger.debug(f"3D front for {measurement_set.name} ({quality_metric}): {len(front)} / {len(measurement_set)} points")
    return ParetoFront(tuple(front), ObjectiveSpace(SPACE_3D, quality_metric))


def pareto_front(measurement_set: MeasurementSet, space: str, quality_metric: str, alpha: Optional[AlphaLike] = None) -> ParetoFront:
    """Dispatch on the objective space name used by the CLI and the tools."""
    if space == SPACE_MV:
        if alpha is None:
            raise UsageError("alpha is required for the mv objective space")
        return pareto_front_mv(measurement_set, alpha, quality_metric)
    if space == SPACE_3D:
        return pareto_front_3d(measurement_set, quality_metric)
    raise UsageError(f"Unknown objective space: {space}", {"allowed": [SPACE_MV, SPACE_3D]})
