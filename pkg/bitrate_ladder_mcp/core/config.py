"""Configuration for the harness and the ladder builders.

Defaults reproduce the experimental operating point: six resolutions,
QP 10..50 in steps of 2, the twelve HLS target bitrates, three alpha values
and four threads per encoder/decoder instance.
"""

from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Optional, Tuple
import csv
import json
import os
import pathlib
import string

from .api import UsageError
from .utils import logger

DEFAULT_RESOLUTIONS: Tuple[int, ...] = (360, 540, 720, 1080, 1440, 2160)
DEFAULT_QPS: Tuple[int, ...] = tuple(range(10, 51, 2))
DEFAULT_TARGETS_MBPS: Tuple[float, ...] = (
    0.145, 0.300, 0.600, 0.900, 1.600, 2.400,
    3.400, 4.500, 5.800, 8.100, 11.600, 16.800,
)
DEFAULT_ALPHAS: Tuple[float, ...] = (0.25, 0.5, 0.75)
DEFAULT_THREADS = 4
DEFAULT_METRIC = os.environ.get("BITRATE_LADDER_METRIC", "xpsnr")
DEFAULT_BINS = int(os.environ.get("BITRATE_LADDER_BINS", "20"))
DEFAULT_ASPECT_RATIO: Tuple[int, int] = (16, 9)

QUALITY_METRICS: Tuple[str, ...] = ("psnr", "xpsnr", "vmaf")

DATA_DIR = pathlib.Path(__file__).resolve().parent.parent / "data"
DEFAULT_FIXED_LADDER_PATH = DATA_DIR / "fixed_ladder_hls.csv"

# VVenC "faster" preset, 1 s intra period; VVdeC; ffmpeg for scaling and metrics
DEFAULT_ENCODE_TEMPLATE = (
    "sh -c \"ffmpeg -v error -i {input} -vf scale={width}:{height}:flags=lanczos "
    "-pix_fmt yuv420p10le -f rawvideo - | vvencapp -i - -s {width}x{height} -c yuv420_10 "
    "-r {fps} --preset faster --refreshsec 1 --qp {qp} -t {threads} -o {output}\""
)
DEFAULT_DECODE_TEMPLATE = "vvdecapp -b {input} -o {output} -t {threads}"
DEFAULT_METRIC_TEMPLATE = (
    "sh -c \"ffmpeg -hide_banner -nostats -f rawvideo -pix_fmt yuv420p10le -s {width}x{height} "
    "-r {fps} -i {input} -i {reference} -lavfi "
    "'[0:v]scale={ref_width}:{ref_height}:flags=lanczos,format=yuv420p10le,split=2[d1][d2];"
    "[1:v]format=yuv420p10le,split=2[r1][r2];[d1][r1]xpsnr;[d2][r2]psnr' -f null - 2>&1\""
)

# Placeholders each template must contain
REQUIRED_PLACEHOLDERS: Dict[str, Tuple[str, ...]] = {
    "encode_template": ("input", "output", "qp", "height"),
    "decode_template": ("input", "output"),
    "metric_template": ("input", "reference"),
}
KNOWN_PLACEHOLDERS = frozenset({
    "input", "output", "reference", "width", "height", "ref_width", "ref_height",
    "qp", "threads", "fps", "frames", "sequence", "python",
})


def template_fields(template: str) -> set:
    """Return the placeholder names used in a command template."""
    return {name for _, name, _, _ in string.Formatter().parse(template) if name}


def even_width(height: int, aspect_ratio: Tuple[int, int]) -> int:
    """Width for a vertical resolution, rounded to the nearest even number."""
    width = height * aspect_ratio[0] / aspect_ratio[1]
    return int(round(width / 2.0)) * 2


@dataclass(frozen=True)
class HarnessConfig:
    """Everything the harness needs to run the (R x Q) grid."""
    resolutions: Tuple[int, ...] = DEFAULT_RESOLUTIONS
    qps: Tuple[int, ...] = DEFAULT_QPS
    encode_template: str = DEFAULT_ENCODE_TEMPLATE
    decode_template: str = DEFAULT_DECODE_TEMPLATE
    metric_template: str = DEFAULT_METRIC_TEMPLATE
    threads_per_job: int = DEFAULT_THREADS
    parallel_jobs: int = 1
    repeats: int = 1
    workdir: str = "work"
    source_pattern: str = "sources/{sequence}.y4m"
    aspect_ratio: Tuple[int, int] = DEFAULT_ASPECT_RATIO
    decode_time_from_output: bool = False
    version_commands: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """Check invariants; raises UsageError naming the offending field."""
        if not self.resolutions:
            raise UsageError("resolutions must not be empty")
        if not self.qps:
            raise UsageError("qps must not be empty")
        if any(r <= 0 for r in self.resolutions):
            raise UsageError("resolutions must be positive", {"resolutions": list(self.resolutions)})
        for name, required in REQUIRED_PLACEHOLDERS.items():
            used = template_fields(getattr(self, name))
            missing = [p for p in required if p not in used]
            if missing:
                raise UsageError(f"{name} is missing placeholders: {', '.join('{' + p + '}' for p in missing)}")
            unknown = sorted(used - KNOWN_PLACEHOLDERS)
            if unknown:
                raise UsageError(f"{name} uses unknown placeholders: {', '.join(unknown)}")
        if self.threads_per_job < 1:
            raise UsageError("threads_per_job must be >= 1")
        if self.parallel_jobs < 1:
            raise UsageError("parallel_jobs must be >= 1")
        if self.repeats < 1:
            raise UsageError("repeats must be >= 1")
        if len(self.aspect_ratio) != 2 or min(self.aspect_ratio) <= 0:
            raise UsageError("aspect_ratio must be two positive integers")

    def width_for(self, height: int) -> int:
        return even_width(height, self.aspect_ratio)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["resolutions"] = list(self.resolutions)
        data["qps"] = list(self.qps)
        data["aspect_ratio"] = list(self.aspect_ratio)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HarnessConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in data.items() if k in known}
        for key in ("resolutions", "qps", "aspect_ratio"):
            if key in kwargs:
                kwargs[key] = tuple(int(x) for x in kwargs[key])
        if "version_commands" in kwargs:
            kwargs["version_commands"] = dict(kwargs["version_commands"])
        return cls(**kwargs)


@dataclass(frozen=True)
class LadderSettings:
    """Ladder-side settings read from the same config file."""
    targets_mbps: Tuple[float, ...] = DEFAULT_TARGETS_MBPS
    fixed_ladder: Tuple[Tuple[float, int], ...] = ()
    quality_metric: str = DEFAULT_METRIC
    alphas: Tuple[float, ...] = DEFAULT_ALPHAS
    bins: int = DEFAULT_BINS
    resolutions: Tuple[int, ...] = DEFAULT_RESOLUTIONS
    qps: Tuple[int, ...] = DEFAULT_QPS

    def __post_init__(self):
        if self.quality_metric not in QUALITY_METRICS:
            raise UsageError(f"Unknown quality metric: {self.quality_metric}", {"allowed": list(QUALITY_METRICS)})
        if self.bins < 1:
            raise UsageError("bins must be a positive integer")

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base_dir: Optional[pathlib.Path] = None) -> "LadderSettings":
        kwargs: Dict[str, Any] = {}
        if "targets_mbps" in data:
            kwargs["targets_mbps"] = tuple(float(t) for t in data["targets_mbps"])
        if "quality_metric" in data:
            kwargs["quality_metric"] = str(data["quality_metric"]).lower()
        if "alphas" in data:
            kwargs["alphas"] = tuple(float(a) for a in data["alphas"])
        if "bins" in data:
            kwargs["bins"] = int(data["bins"])
        for key in ("resolutions", "qps"):
            if key in data:
                kwargs[key] = tuple(int(x) for x in data[key])
        fixed = data.get("fixed_ladder")
        if isinstance(fixed, str):
            path = pathlib.Path(fixed)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            kwargs["fixed_ladder"] = read_fixed_ladder_pairs(path)
        elif fixed:
            kwargs["fixed_ladder"] = tuple((float(t), int(r)) for t, r in fixed)
        return cls(**kwargs)

    def fixed_ladder_pairs(self) -> Tuple[Tuple[float, int], ...]:
        """Configured pairs, or the bundled HLS-derived default."""
        return self.fixed_ladder or read_fixed_ladder_pairs(DEFAULT_FIXED_LADDER_PATH)


def read_fixed_ladder_pairs(path: os.PathLike) -> Tuple[Tuple[float, int], ...]:
    """Read a `target_mbps,resolution` CSV."""
    path = pathlib.Path(path)
    if not path.exists():
        raise UsageError(f"Fixed ladder file not found: {path}")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(row for row in handle if not row.startswith("#"))
        if reader.fieldnames != ["target_mbps", "resolution"]:
            raise UsageError(f"{path}: expected header target_mbps,resolution", {"header": reader.fieldnames})
        try:
            return tuple((float(row["target_mbps"]), int(row["resolution"])) for row in reader)
        except (TypeError, ValueError) as e:
            raise UsageError(f"{path}: malformed fixed ladder row: {e}")


def load_config_file(path: Optional[os.PathLike]) -> Dict[str, Any]:
    """Load the JSON config file; an absent path yields an empty config."""
    if path is None:
        return {}
    path = pathlib.Path(path)
    if not path.exists():
        raise UsageError(f"Config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise UsageError(f"Config file is not valid JSON: {path}: {e}")
    if not isinstance(data, dict):
        raise UsageError(f"Config file must hold a JSON object: {path}")
    logger.debug(f"Loaded config {path}: keys={sorted(data)}")
    return data


def load_harness_config(path: os.PathLike) -> HarnessConfig:
    """Load and validate a HarnessConfig JSON file."""
    data = load_config_file(path)
    try:
        return HarnessConfig.from_dict(data)
    except TypeError as e:
        raise UsageError(f"Invalid harness config {path}: {e}")


def load_ladder_settings(path: Optional[os.PathLike]) -> LadderSettings:
    """Load ladder settings; relative fixed-ladder paths resolve against the config file."""
    data = load_config_file(path)
    base_dir = pathlib.Path(path).resolve().parent if path is not None else None
    return LadderSettings.from_dict(data, base_dir)


def parse_float_list(text: Optional[str]) -> Optional[List[float]]:
    """Parse '0.145,0.3,...' as used on the command line."""
    if text is None or text == "":
        return None
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"Expected a comma-separated list of numbers, got {text!r}")
