"""MCP tools over the front, ladder, evaluation and harness modules."""

from typing import List, Optional
import pathlib

from . import cli, ladders, pareto
from .api import UsageError, ladder_tool
from .config import load_harness_config, load_ladder_settings, parse_float_list
from .evaluation import distribution_summary
from .harness import plan_jobs
from .measurements import parse_sequence_metadata
from .resources import register_ladder
from .server import mcp_server


def _select(sets, sequence: str):
    if not sequence:
        return sets
    chosen = [s for s in sets if s.name == sequence]
    if not chosen:
        raise UsageError(f"Sequence {sequence} is not in the measurement file", {"sequences": [s.name for s in sets]})
    return chosen


@mcp_server.tool()
@ladder_tool
async def compute_pareto_front(
    measurements_path: str,
    alpha: Optional[float] = None,
    quality_metric: str = "",
    space: str = "mv",
    sequence: str = "",
) -> str:
    """
    Extract the Pareto front of each sequence in a measurement CSV.

    Args:
        measurements_path: Path to a measurement CSV
        alpha: Decode-time weight in [0, 1]; required for the mv space
        quality_metric: psnr, xpsnr or vmaf (default: BITRATE_LADDER_METRIC, else xpsnr)
        space: 'mv' (composite rate/decode-time vs quality) or '3d' (decode time, bitrate, quality)
        sequence: Only this sequence (default: all)
    """
    settings = load_ladder_settings(None)
    sets = _select(cli.load_sets(measurements_path, settings), sequence)
    quality_metric = quality_metric or settings.quality_metric
    fronts = [pareto.pareto_front(s, space, quality_metric, alpha).to_json(s.name) for s in sets]
    return {"fronts": fronts}


@mcp_server.tool()
@ladder_tool
async def build_ladder(
    measurements_path: str,
    method: str = "rqt-pf",
    alpha: Optional[float] = None,
    quality_metric: str = "",
    targets_mbps: str = "",
    sequence: str = "",
) -> str:
    """
    Build a bitrate ladder per sequence. Built ladders are also listed under bitrate-ladder://ladders.

    Args:
        measurements_path: Path to a measurement CSV
        method: rqt-pf, qt-pf, dynres, fixed or default
        alpha: Decode-time weight in [0, 1]; required for rqt-pf only
        quality_metric: psnr, xpsnr or vmaf (default: BITRATE_LADDER_METRIC, else xpsnr)
        targets_mbps: Comma-separated target bitrates in Mbps (default: the 12 HLS targets)
        sequence: Only this sequence (default: all)
    """
    settings = load_ladder_settings(None)
    quality_metric = quality_metric or settings.quality_metric
    targets = ladders.TargetBitrateSet.of(parse_float_list(targets_mbps) or settings.targets_mbps)
    fixed_spec = ladders.FixedLadderSpec(settings.fixed_ladder_pairs()) if method == "fixed" else None
    sets = _select(cli.load_sets(measurements_path, settings), sequence)

    built = []
    for measurement_set in sets:
        ladder = ladders.build_ladder(measurement_set, method, quality_metric, alpha, targets, fixed_spec)
        built.append({"ladder_id": register_ladder(ladder), **ladder.to_json()})
    return {"ladders": built}


@mcp_server.tool()
@ladder_tool
async def compare_ladders(method_paths: List[str], reference_paths: List[str]) -> str:
    """
    Compare ladder files against reference ladder files (BD-rate, BD-quality, decode-time delta).

    Args:
        method_paths: Ladder JSON files or directories of them, any number of methods
        reference_paths: Ladder JSON files or directories of them, one method (usually fixed)
    """
    results = cli.compare_groups(cli.read_ladders(method_paths), cli.read_ladders(reference_paths))
    return {
        "methods": [
            {"aggregate": aggregate.to_json(), "per_sequence": [r.to_json() for r in per_sequence]}
            for aggregate, per_sequence in results
        ],
        "table": cli.render_table([aggregate for aggregate, _ in results]),
    }


@mcp_server.tool()
@ladder_tool
async def summarize_distribution(ladder_paths: List[str], field: str = "decode_time", bins: int = 20) -> str:
    """
    Histogram of one field over the present rungs of ladders, per method.

    Args:
        ladder_paths: Ladder JSON files or directories of them
        field: decode_time, bitrate, psnr, xpsnr or vmaf
        bins: Number of histogram bins
    """
    groups = cli.group_by_label(cli.read_ladders(ladder_paths))
    return {
        "histograms": {
            label: distribution_summary(list(by_sequence.values()), field, bins).to_json()
            for label, by_sequence in groups.items()
        }
    }


@mcp_server.tool()
@ladder_tool
async def plan_measurement_jobs(config_path: str, sequences_path: str) -> str:
    """
    List the encode jobs a measurement run would execute.

    Args:
        config_path: Harness config JSON
        sequences_path: CSV with sequence,native_resolution,fps,frame_count
    """
    config = load_harness_config(config_path)
    path = pathlib.Path(sequences_path)
    if not path.exists():
        raise UsageError(f"Sequence list not found: {path}")
    with open(path, newline="", encoding="utf-8") as handle:
        sequences = parse_sequence_metadata(handle)
    plan = plan_jobs(sequences.values(), config)
    return {
        "job_count": len(plan),
        "jobs": [{"job_id": j.job_id, "sequence": j.sequence.name, "resolution": j.resolution, "qp": j.qp} for j in plan],
    }
