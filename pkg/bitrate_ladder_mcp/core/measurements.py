"""Measurement data model and the measurement CSV reader/writer.

A measurement file holds one row per encode:

    sequence,resolution,qp,bitrate_kbps,decode_time_s,psnr_db,xpsnr_db,vmaf

Optional directive lines before the header declare the grid the rows must
come from (``# resolutions=360,540,...`` and ``# qps=10,12,...``), the run
manifest that produced the file (``# run_manifest=<id>``) and, one line per
sequence, its metadata row (``# sequence=<name>,<native_resolution>,<fps>,<frame_count>``).
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, TextIO, Tuple
import csv
import io
import math
import pathlib

from .api import (
    DataError,
    DuplicateKeyError,
    EmptyInputError,
    MeasurementError,
    MissingMetricError,
    SequenceMismatchError,
)
from .config import DEFAULT_QPS, DEFAULT_RESOLUTIONS, QUALITY_METRICS
from .utils import format_float, logger

MEASUREMENT_COLUMNS = (
    "sequence", "resolution", "qp", "bitrate_kbps", "decode_time_s",
    "psnr_db", "xpsnr_db", "vmaf",
)
METADATA_COLUMNS = ("sequence", "native_resolution", "fps", "frame_count")

# Column holding each quality metric
METRIC_COLUMNS = {"psnr": "psnr_db", "xpsnr": "xpsnr_db", "vmaf": "vmaf"}


@dataclass(frozen=True)
class SequenceId:
    """A test sequence. Rate and length are unknown until metadata is supplied."""
    name: str
    native_resolution: int
    frame_rate: Optional[float] = None
    frame_count: Optional[int] = None

    def validate(self, resolutions: Optional[Iterable[int]] = None) -> None:
        if not self.name:
            raise DataError("sequence name must not be empty")
        if resolutions is not None and self.native_resolution not in set(resolutions):
            raise DataError(
                f"native resolution {self.native_resolution} of {self.name} is not a declared resolution",
                {"resolutions": sorted(resolutions)},
            )
        if self.frame_rate is not None and not self.frame_rate > 0:
            raise DataError(f"frame rate of {self.name} must be positive")
        if self.frame_count is not None and self.frame_count <= 0:
            raise DataError(f"frame count of {self.name} must be positive")

    @property
    def duration_s(self) -> Optional[float]:
        if self.frame_rate is None or self.frame_count is None:
            return None
        return self.frame_count / self.frame_rate


@dataclass(frozen=True)
class EncodePoint:
    """One measured encode of a sequence at (resolution, qp)."""
    sequence: str
    resolution: int
    qp: int
    bitrate_kbps: float
    decode_time_s: float
    psnr: Optional[float] = None
    xpsnr: Optional[float] = None
    vmaf: Optional[float] = None

    @property
    def key(self) -> Tuple[int, int]:
        return (self.resolution, self.qp)

    def has(self, metric: str) -> bool:
        return getattr(self, check_metric(metric)) is not None

    def quality(self, metric: str) -> float:
        """Quality value in the metric's units; raises if absent."""
        value = getattr(self, check_metric(metric))
        if value is None:
            raise MissingMetricError(
                f"{self.sequence} {self.resolution}p qp{self.qp} has no {metric} value",
                {"sequence": self.sequence, "resolution": self.resolution, "qp": self.qp, "metric": metric},
            )
        return value

    def validate(
        self,
        resolutions: Optional[Iterable[int]] = None,
        qps: Optional[Iterable[int]] = None,
    ) -> None:
        """Check the point invariants; raises MeasurementError."""
        if not (math.isfinite(self.bitrate_kbps) and self.bitrate_kbps > 0):
            raise MeasurementError(f"bitrate must be positive, got {self.bitrate_kbps}")
        if not (math.isfinite(self.decode_time_s) and self.decode_time_s > 0):
            raise MeasurementError(f"decode time must be positive, got {self.decode_time_s}")
        if resolutions is not None and self.resolution not in set(resolutions):
            raise MeasurementError(f"resolution {self.resolution} is not a declared resolution")
        if qps is not None and self.qp not in set(qps):
            raise MeasurementError(f"qp {self.qp} is not a declared qp")
        values = [self.psnr, self.xpsnr, self.vmaf]
        if all(v is None for v in values):
            raise MeasurementError("at least one quality value is required")
        if any(v is not None and not math.isfinite(v) for v in values):
            raise MeasurementError("quality values must be finite")
        if self.vmaf is not None and not 0.0 <= self.vmaf <= 100.0:
            raise MeasurementError(f"vmaf must lie within [0, 100], got {self.vmaf}")

    def to_row(self) -> List[str]:
        def optional(value):
            return "" if value is None else format_float(value)

        return [
            self.sequence,
            str(self.resolution),
            str(self.qp),
            format_float(self.bitrate_kbps),
            format_float(self.decode_time_s),
            optional(self.psnr),
            optional(self.xpsnr),
            optional(self.vmaf),
        ]


def check_metric(metric: str) -> str:
    """Validate a quality metric name and return it."""
    if metric not in QUALITY_METRICS:
        raise DataError(f"Unknown quality metric: {metric}", {"allowed": list(QUALITY_METRICS)})
    return metric


class MeasurementSet:
    """All encode points of one sequence, keyed by (resolution, qp)."""

    def __init__(self, sequence: SequenceId, points: Iterable[EncodePoint] = ()):
        self.sequence = sequence
        by_key: Dict[Tuple[int, int], EncodePoint] = {}
        for point in points:
            if point.sequence != sequence.name:
                raise SequenceMismatchError(
                    f"point for {point.sequence} does not belong to set {sequence.name}"
                )
            if point.key in by_key:
                raise DuplicateKeyError(
                    f"duplicate point {sequence.name} {point.resolution}p qp{point.qp}",
                    details={"sequence": sequence.name, "resolution": point.resolution, "qp": point.qp},
                )
            by_key[point.key] = point
        self.points: Tuple[EncodePoint, ...] = tuple(by_key[k] for k in sorted(by_key))

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[EncodePoint]:
        return iter(self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MeasurementSet):
            return NotImplemented
        return self.sequence == other.sequence and self.points == other.points

    def __repr__(self) -> str:
        return f"MeasurementSet({self.sequence.name!r}, {len(self.points)} points)"

    @property
    def name(self) -> str:
        return self.sequence.name

    def resolutions(self) -> List[int]:
        return sorted({p.resolution for p in self.points})

    def at_resolution(self, resolution: int) -> List[EncodePoint]:
        return [p for p in self.points if p.resolution == resolution]

    def require_metric(self, metric: str) -> None:
        """Raise MissingMetricError if any point lacks the metric."""
        for point in self.points:
            point.quality(metric)


def merge_sets(a: MeasurementSet, b: MeasurementSet) -> MeasurementSet:
    """Union of two sets for the same sequence; duplicate keys are rejected."""
    if a.sequence.name != b.sequence.name:
        raise SequenceMismatchError(
            f"cannot merge {a.sequence.name} with {b.sequence.name}",
            {"a": a.sequence.name, "b": b.sequence.name},
        )
    sequence = a.sequence
    if a.sequence != b.sequence:
        # Prefer whichever side carries sequence metadata
        sequence = a.sequence if a.sequence.frame_rate is not None else b.sequence
    return MeasurementSet(sequence, list(a.points) + list(b.points))


def _parse_int_list(text: str, line: int) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise MeasurementError(f"malformed directive value {text!r}", line=line)


def _parse_float(text: str, column: str, line: int, optional: bool = False) -> Optional[float]:
    text = text.strip()
    if text == "":
        if optional:
            return None
        raise MeasurementError(f"{column} is required", line=line)
    try:
        value = float(text)
    except ValueError:
        raise MeasurementError(f"{column} is not a number: {text!r}", line=line)
    if not math.isfinite(value):
        raise MeasurementError(f"{column} must be finite: {text!r}", line=line)
    return value


def _parse_int(text: str, column: str, line: int) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise MeasurementError(f"{column} is not an integer: {text!r}", line=line)


def parse_measurements(
    stream: TextIO,
    resolutions: Optional[Sequence[int]] = None,
    qps: Optional[Sequence[int]] = None,
    sequences: Optional[Dict[str, SequenceId]] = None,
) -> List[MeasurementSet]:
    """
    Parse a measurement CSV into one MeasurementSet per sequence.

    Args:
        stream: Text stream in the measurement CSV format
        resolutions: Allowed resolutions when the file declares none (default: the experiment grid)
        qps: Allowed QPs when the file declares none (default: the experiment grid)
        sequences: Sequence metadata by name, taking precedence over the file's
                   sequence directives; sequences with neither get the largest
                   declared resolution as their native resolution

    Returns:
        Measurement sets sorted by sequence name
    """
    declared_resolutions: Optional[Tuple[int, ...]] = None
    declared_qps: Optional[Tuple[int, ...]] = None
    declared_sequences: Dict[str, SequenceId] = {}
    header_seen = False
    grouped: Dict[str, List[EncodePoint]] = {}
    seen_keys: Dict[Tuple[str, int, int], int] = {}

    for line_number, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not header_seen and line.startswith("#"):
            key, _, value = line.lstrip("#").strip().partition("=")
            key = key.strip()
            if key == "resolutions":
                declared_resolutions = _parse_int_list(value, line_number)
            elif key == "qps":
                declared_qps = _parse_int_list(value, line_number)
            elif key == "sequence":
                sequence = _sequence_from_row(next(csv.reader([value]), []), line_number, partial=True)
                if sequence.name in declared_sequences:
                    raise DuplicateKeyError(f"duplicate sequence directive for {sequence.name}", line=line_number)
                declared_sequences[sequence.name] = sequence
            continue
        if not header_seen:
            fields = next(csv.reader([line]))
            if tuple(f.strip() for f in fields) != MEASUREMENT_COLUMNS:
                raise MeasurementError(
                    f"expected header {','.join(MEASUREMENT_COLUMNS)}",
                    line=line_number,
                    details={"header": fields},
                )
            header_seen = True
            continue
        if not line.strip():
            continue

        fields = next(csv.reader([line]))
        if len(fields) != len(MEASUREMENT_COLUMNS):
            raise MeasurementError(
                f"expected {len(MEASUREMENT_COLUMNS)} columns, got {len(fields)}", line=line_number
            )
        name = fields[0].strip()
        if not name:
            raise MeasurementError("sequence is required", line=line_number)
        point = EncodePoint(
            sequence=name,
            resolution=_parse_int(fields[1], "resolution", line_number),
            qp=_parse_int(fields[2], "qp", line_number),
            bitrate_kbps=_parse_float(fields[3], "bitrate_kbps", line_number),
            decode_time_s=_parse_float(fields[4], "decode_time_s", line_number),
            psnr=_parse_float(fields[5], "psnr_db", line_number, optional=True),
            xpsnr=_parse_float(fields[6], "xpsnr_db", line_number, optional=True),
            vmaf=_parse_float(fields[7], "vmaf", line_number, optional=True),
        )
        allowed_r = declared_resolutions or tuple(resolutions or DEFAULT_RESOLUTIONS)
        allowed_q = declared_qps or tuple(qps or DEFAULT_QPS)
        try:
            point.validate(allowed_r, allowed_q)
        except MeasurementError as e:
            raise MeasurementError(e.message, line=line_number, details=e.details)

        key = (name, point.resolution, point.qp)
        if key in seen_keys:
            raise DuplicateKeyError(
                f"duplicate (sequence, resolution, qp) = {key}, first seen on line {seen_keys[key]}",
                line=line_number,
                details={"sequence": name, "resolution": point.resolution, "qp": point.qp},
            )
        seen_keys[key] = line_number
        grouped.setdefault(name, []).append(point)

    if not header_seen:
        raise MeasurementError("missing header row")

    allowed_r = declared_resolutions or tuple(resolutions or DEFAULT_RESOLUTIONS)
    result = []
    for name in sorted(grouped):
        sequence = (sequences or {}).get(name) or declared_sequences.get(name) or SequenceId(name, max(allowed_r))
        sequence.validate(allowed_r)
        result.append(MeasurementSet(sequence, grouped[name]))

    logger.debug(f"Parsed {sum(len(s) for s in result)} points for {len(result)} sequences")
    return result


def serialize_measurements(
    sets: Iterable[MeasurementSet],
    stream: TextIO,
    resolutions: Optional[Sequence[int]] = None,
    qps: Optional[Sequence[int]] = None,
    run_manifest: Optional[str] = None,
) -> None:
    """Write sets in the measurement CSV format, rows ordered by (sequence, resolution, qp)."""
    if run_manifest:
        stream.write(f"# run_manifest={run_manifest}\n")
    if resolutions is not None:
        stream.write(f"# resolutions={','.join(str(r) for r in sorted(resolutions))}\n")
    if qps is not None:
        stream.write(f"# qps={','.join(str(q) for q in sorted(qps))}\n")
    sets = sorted(sets, key=lambda s: s.name)
    for measurement_set in sets:
        row = io.StringIO()
        csv.writer(row, lineterminator="").writerow(_sequence_row(measurement_set.sequence))
        stream.write(f"# sequence={row.getvalue()}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(MEASUREMENT_COLUMNS)
    for measurement_set in sets:
        for point in measurement_set.points:
            writer.writerow(point.to_row())


def _sequence_row(sequence: SequenceId) -> List[str]:
    return [
        sequence.name,
        str(sequence.native_resolution),
        "" if sequence.frame_rate is None else format_float(sequence.frame_rate),
        "" if sequence.frame_count is None else str(sequence.frame_count),
    ]


def _sequence_from_row(row: Sequence[str], line: int, partial: bool = False) -> SequenceId:
    """A metadata row as a SequenceId. With partial, fps and frame_count may be empty."""
    if len(row) != len(METADATA_COLUMNS):
        raise MeasurementError(f"expected {len(METADATA_COLUMNS)} columns, got {len(row)}", line=line)
    fps_text, count_text = row[2].strip(), row[3].strip()
    fps = None
    if fps_text or not partial:
        try:
            fps = float(Fraction(fps_text))
        except (ValueError, ZeroDivisionError):
            raise MeasurementError(f"fps is not a positive rational: {row[2]!r}", line=line)
    frame_count = _parse_int(count_text, "frame_count", line) if count_text or not partial else None
    sequence = SequenceId(
        name=row[0].strip(),
        native_resolution=_parse_int(row[1], "native_resolution", line),
        frame_rate=fps,
        frame_count=frame_count,
    )
    try:
        sequence.validate()
    except DataError as e:
        raise MeasurementError(e.message, line=line)
    return sequence


def parse_sequence_metadata(stream: TextIO) -> Dict[str, SequenceId]:
    """Parse the `sequence,native_resolution,fps,frame_count` companion CSV."""
    reader = csv.reader(line for line in stream if not line.startswith("#"))
    try:
        header = next(reader)
    except StopIteration:
        raise MeasurementError("missing header row")
    if tuple(h.strip() for h in header) != METADATA_COLUMNS:
        raise MeasurementError(f"expected header {','.join(METADATA_COLUMNS)}", details={"header": header})

    sequences: Dict[str, SequenceId] = {}
    for row_number, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        sequence = _sequence_from_row(row, row_number)
        if sequence.name in sequences:
            raise DuplicateKeyError(f"duplicate sequence {sequence.name}", line=row_number)
        sequences[sequence.name] = sequence
    return sequences


def serialize_sequence_metadata(sequences: Iterable[SequenceId], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(METADATA_COLUMNS)
    for sequence in sorted(sequences, key=lambda s: s.name):
        writer.writerow(_sequence_row(sequence))


def load_measurements(
    path: pathlib.Path,
    metadata_path: Optional[pathlib.Path] = None,
    resolutions: Optional[Sequence[int]] = None,
    qps: Optional[Sequence[int]] = None,
) -> List[MeasurementSet]:
    """Read a measurement file (and optional metadata file) from disk."""
    path = pathlib.Path(path)
    if not path.exists():
        raise EmptyInputError(f"Measurement file not found: {path}")
    sequences = None
    if metadata_path is not None:
        with open(metadata_path, newline="", encoding="utf-8") as handle:
            sequences = parse_sequence_metadata(handle)
    with open(path, newline="", encoding="utf-8") as handle:
        sets = parse_measurements(handle, resolutions, qps, sequences)
    if not sets:
        raise EmptyInputError(f"No measurements in {path}")
    return sets

