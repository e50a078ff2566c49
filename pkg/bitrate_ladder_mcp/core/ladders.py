"""Bitrate ladder construction.

Every builder fills one rung per target bitrate. A rung holds the
highest-quality candidate whose bitrate fits within the target, so more
budget never selects worse quality; ties go to lower decode time, then lower
bitrate, then lower QP. Builders differ only in their candidate sets:

* rqt-pf: the (M, v) Pareto front for a given alpha
* qt-pf: the same front with alpha = 1 (decode time only)
* dynres: every measured point, ranked by XPSNR
* default: points at the sequence's native resolution
* fixed: a mandated resolution per target (no quality ranking)
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple
import json
import os
import pathlib

from .api import DataError, EmptyInputError, UsageError
from .config import DEFAULT_RESOLUTIONS, DEFAULT_TARGETS_MBPS
from .measurements import EncodePoint, MeasurementSet, check_metric
from .pareto import AlphaLike, as_alpha, pareto_front_mv
from .utils import logger, slugify, write_json


class LadderMethod(str, Enum):
    RQT_PF = "rqt-pf"
    QT_PF = "qt-pf"
    DYN_RES = "dynres"
    FIXED = "fixed"
    DEFAULT = "default"


DISPLAY_NAMES = {
    LadderMethod.RQT_PF: "RQT-PF",
    LadderMethod.QT_PF: "QT-PF",
    LadderMethod.DYN_RES: "DynResXPSNR",
    LadderMethod.FIXED: "FixedLadder",
    LadderMethod.DEFAULT: "Default",
}


@dataclass(frozen=True)
class TargetBitrateSet:
    """Target bitrates in Mbps, strictly increasing."""
    targets: Tuple[float, ...] = DEFAULT_TARGETS_MBPS

    def __post_init__(self):
        if not self.targets:
            raise UsageError("at least one target bitrate is required")
        if any(t <= 0 for t in self.targets):
            raise UsageError("target bitrates must be positive", {"targets": list(self.targets)})
        if any(b <= a for a, b in zip(self.targets, self.targets[1:])):
            raise UsageError("target bitrates must be strictly increasing", {"targets": list(self.targets)})

    def __iter__(self):
        return iter(self.targets)

    def __len__(self) -> int:
        return len(self.targets)

    @classmethod
    def of(cls, targets: Optional[Iterable[float]]) -> "TargetBitrateSet":
        return cls() if targets is None else cls(tuple(float(t) for t in targets))


@dataclass(frozen=True)
class FixedLadderSpec:
    """Mandated (target Mbps, resolution) pairs of a content-agnostic ladder."""
    entries: Tuple[Tuple[float, int], ...]

    def __post_init__(self):
        TargetBitrateSet(tuple(t for t, _ in self.entries))

    def validate(self, resolutions: Iterable[int] = DEFAULT_RESOLUTIONS) -> None:
        allowed = set(resolutions)
        unknown = sorted({r for _, r in self.entries if r not in allowed})
        if unknown:
            raise UsageError(f"fixed ladder uses undeclared resolutions {unknown}", {"allowed": sorted(allowed)})


@dataclass(frozen=True)
class LadderRung:
    target_mbps: float
    selected: Optional[EncodePoint] = None
    over_target: bool = False

    @property
    def feasible(self) -> bool:
        return self.selected is not None


@dataclass(frozen=True)
class Ladder:
    method: LadderMethod
    sequence: str
    quality_metric: str
    rungs: Tuple[LadderRung, ...]
    alpha: Optional[float] = None

    @property
    def label(self) -> str:
        """Machine label, e.g. 'rqt-pf(0.75)'."""
        if self.method == LadderMethod.RQT_PF:
            return f"{self.method.value}({self.alpha:g})"
        return self.method.value

    @property
    def display_name(self) -> str:
        """Human label, e.g. 'RQT-PF (alpha=0.75)'."""
        name = DISPLAY_NAMES[self.method]
        if self.method == LadderMethod.RQT_PF:
            return f"{name} (alpha={self.alpha:g})"
        return name

    def present(self) -> List[LadderRung]:
        return [r for r in self.rungs if r.feasible]

    def selected_points(self) -> List[EncodePoint]:
        return [r.selected for r in self.rungs if r.selected is not None]

    def to_json(self, run_manifest: Optional[str] = None) -> Dict[str, Any]:
        header: Dict[str, Any] = {"method": self.method.value}
        if self.method == LadderMethod.RQT_PF:
            header["alpha"] = self.alpha
        header["quality_metric"] = self.quality_metric
        header["sequence"] = self.sequence
        if run_manifest:
            header["run_manifest"] = run_manifest
        rungs = []
        for rung in self.rungs:
            point = rung.selected
            rungs.append({
                "target_mbps": rung.target_mbps,
                "resolution": point.resolution if point else None,
                "qp": point.qp if point else None,
                "bitrate_kbps": point.bitrate_kbps if point else None,
                "decode_time_s": point.decode_time_s if point else None,
                "psnr_db": point.psnr if point else None,
                "xpsnr_db": point.xpsnr if point else None,
                "vmaf": point.vmaf if point else None,
                "feasible": rung.feasible,
                "over_target": rung.over_target,
            })
        return {"header": header, "rungs": rungs}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "Ladder":
        try:
            header = data["header"]
            method = LadderMethod(header["method"])
            sequence = str(header["sequence"])
            rungs = []
            for row in data["rungs"]:
                point = None
                if row.get("feasible"):
                    point = EncodePoint(
                        sequence=sequence,
                        resolution=int(row["resolution"]),
                        qp=int(row["qp"]),
                        bitrate_kbps=float(row["bitrate_kbps"]),
                        decode_time_s=float(row["decode_time_s"]),
                        psnr=row.get("psnr_db"),
                        xpsnr=row.get("xpsnr_db"),
                        vmaf=row.get("vmaf"),
                    )
                rungs.append(LadderRung(float(row["target_mbps"]), point, bool(row.get("over_target", False))))
            return cls(
                method=method,
                sequence=sequence,
                quality_metric=str(header["quality_metric"]),
                rungs=tuple(rungs),
                alpha=header.get("alpha"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"Malformed ladder JSON: {e}")


def target_kbps(target_mbps: float) -> float:
    # 0.145 * 1000 must compare equal to a 145 kbps encode
    return round(target_mbps * 1000.0, 9)


def _rank_key(point: EncodePoint, quality_metric: str):
    return (-point.quality(quality_metric), point.decode_time_s, point.bitrate_kbps, point.qp)


def select_best_feasible(candidates: Sequence[EncodePoint], target_mbps: float, quality_metric: str) -> Optional[EncodePoint]:
    """Highest-quality candidate with bitrate <= target, or None."""
    limit = target_kbps(target_mbps)
    feasible = [p for p in candidates if p.bitrate_kbps <= limit]
    if not feasible:
        return None
    return min(feasible, key=lambda p: _rank_key(p, quality_metric))


def enforce_monotonicity(rungs: Sequence[LadderRung], quality_metric: str) -> List[LadderRung]:
    """Reuse the previous rung's point wherever quality or bitrate would go down."""
    result: List[LadderRung] = []
    previous: Optional[EncodePoint] = None
    for rung in rungs:
        point = rung.selected
        if point is not None and previous is not None:
            if (point.quality(quality_metric) < previous.quality(quality_metric)
                    or point.bitrate_kbps < previous.bitrate_kbps):
                logger.debug(f"Rung {rung.target_mbps} Mbps reuses the {previous.resolution}p qp{previous.qp} point")
                point = previous
        result.append(LadderRung(rung.target_mbps, point, rung.over_target))
        if point is not None:
            previous = point
    return result


def _sample(
    candidates: Sequence[EncodePoint],
    targets: TargetBitrateSet,
    quality_metric: str,
) -> Tuple[LadderRung, ...]:
    rungs = [LadderRung(t, select_best_feasible(candidates, t, quality_metric)) for t in targets]
    rungs = enforce_monotonicity(rungs, quality_metric)
    absent = [r.target_mbps for r in rungs if not r.feasible]
    if absent:
        logger.warning(f"No feasible point for targets {absent} Mbps")
    return tuple(rungs)


def _require_points(measurement_set: MeasurementSet) -> None:
    if not measurement_set.points:
        raise EmptyInputError(f"Measurement set {measurement_set.name} is empty")


def build_rqt_pf_ladder(
    measurement_set: MeasurementSet,
    alpha: AlphaLike,
    quality_metric: str,
    targets: Optional[TargetBitrateSet] = None,
) -> Ladder:
    """Sample the (M, v) front of a set into a ladder."""
    _require_points(measurement_set)
    alpha = as_alpha(alpha)
    targets = targets or TargetBitrateSet()
    front = pareto_front_mv(measurement_set, alpha, quality_metric)
    rungs = _sample(front.points, targets, quality_metric)
    logger.debug(f"RQT-PF ladder for {measurement_set.name}, alpha={alpha.value}: {len(front)} front points")
    return Ladder(LadderMethod.RQT_PF, measurement_set.name, quality_metric, rungs, alpha.value)


def build_qt_pf_ladder(
    measurement_set: MeasurementSet,
    quality_metric: str,
    targets: Optional[TargetBitrateSet] = None,
) -> Ladder:
    """The decode-time-only limit of the RQT-PF ladder (alpha = 1)."""
    ladder = build_rqt_pf_ladder(measurement_set, 1.0, quality_metric, targets)
    return Ladder(LadderMethod.QT_PF, ladder.sequence, quality_metric, ladder.rungs)


def build_dynres_ladder(
    measurement_set: MeasurementSet,
    targets: Optional[TargetBitrateSet] = None,
) -> Ladder:
    """Per target, the measured point with the highest XPSNR."""
    _require_points(measurement_set)
    measurement_set.require_metric("xpsnr")
    rungs = _sample(measurement_set.points, targets or TargetBitrateSet(), "xpsnr")
    return Ladder(LadderMethod.DYN_RES, measurement_set.name, "xpsnr", rungs)


def build_default_ladder(
    measurement_set: MeasurementSet,
    quality_metric: str,
    targets: Optional[TargetBitrateSet] = None,
) -> Ladder:
    """Per target, the best native-resolution encode; low rungs are usually absent."""
    _require_points(measurement_set)
    native = measurement_set.sequence.native_resolution
    candidates = measurement_set.at_resolution(native)
    if not candidates:
        raise DataError(f"{measurement_set.name} has no points at its native resolution {native}p")
    rungs = _sample(candidates, targets or TargetBitrateSet(), quality_metric)
    return Ladder(LadderMethod.DEFAULT, measurement_set.name, quality_metric, rungs)


def build_fixed_ladder(
    measurement_set: MeasurementSet,
    spec: FixedLadderSpec,
    quality_metric: str = "xpsnr",
) -> Ladder:
    """
    Fill each mandated (target, resolution) pair.

    The highest bitrate at the mandated resolution that fits the target is
    used; when none fits, the lowest-bitrate point at that resolution is used
    and the rung is flagged over-target.
    """
    _require_points(measurement_set)
    check_metric(quality_metric)
    rungs = []
    for target, resolution in spec.entries:
        candidates = measurement_set.at_resolution(resolution)
        if not candidates:
            raise DataError(
                f"{measurement_set.name} has no points at {resolution}p required by the fixed ladder",
                {"resolution": resolution, "available": measurement_set.resolutions()},
            )
        limit = target_kbps(target)
        fitting = [p for p in candidates if p.bitrate_kbps <= limit]
        if fitting:
            point = max(fitting, key=lambda p: (p.bitrate_kbps, -p.qp))
            rungs.append(LadderRung(target, point))
        else:
            point = min(candidates, key=lambda p: (p.bitrate_kbps, p.qp))
            logger.warning(
                f"{measurement_set.name}: fixed rung {target} Mbps at {resolution}p exceeds target "
                f"({point.bitrate_kbps:.1f} kbps)"
            )
            rungs.append(LadderRung(target, point, over_target=True))
    return Ladder(LadderMethod.FIXED, measurement_set.name, quality_metric, tuple(rungs))


def build_ladder(
    measurement_set: MeasurementSet,
    method: str,
    quality_metric: str,
    alpha: Optional[float] = None,
    targets: Optional[TargetBitrateSet] = None,
    fixed_spec: Optional[FixedLadderSpec] = None,
) -> Ladder:
    """Dispatch on a method name; alpha is required for rqt-pf and rejected otherwise."""
    try:
        method = LadderMethod(method)
    except ValueError:
        raise UsageError(f"Unknown ladder method: {method}", {"allowed": [m.value for m in LadderMethod]})
    check_metric(quality_metric)
    if method == LadderMethod.RQT_PF:
        if alpha is None:
            raise UsageError("alpha is required for the rqt-pf method")
        return build_rqt_pf_ladder(measurement_set, alpha, quality_metric, targets)
    if alpha is not None:
        raise UsageError(f"alpha only applies to rqt-pf, not {method.value}")
    if method == LadderMethod.QT_PF:
        return build_qt_pf_ladder(measurement_set, quality_metric, targets)
    if method == LadderMethod.DYN_RES:
        return build_dynres_ladder(measurement_set, targets)
    if method == LadderMethod.DEFAULT:
        return build_default_ladder(measurement_set, quality_metric, targets)
    if fixed_spec is None:
        raise UsageError("the fixed method needs a fixed ladder specification")
    return build_fixed_ladder(measurement_set, fixed_spec, quality_metric)


def ladder_file_name(ladder: Ladder) -> str:
    return f"{ladder.sequence}__{slugify(ladder.label)}.json"


def write_ladder(ladder: Ladder, out_dir: os.PathLike, run_manifest: Optional[str] = None) -> pathlib.Path:
    return write_json(pathlib.Path(out_dir) / ladder_file_name(ladder), ladder.to_json(run_manifest))


def read_ladder(path: os.PathLike) -> Ladder:
    path = pathlib.Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise EmptyInputError(f"Ladder file not found: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"Ladder file is not valid JSON: {path}: {e}")
    return Ladder.from_json(data)
