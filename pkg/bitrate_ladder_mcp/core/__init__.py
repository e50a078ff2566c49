"""Core functionality for the bitrate ladder package."""

from .server import mcp_server, main
from . import tools
from .measurements import EncodePoint, MeasurementSet, SequenceId, parse_measurements, serialize_measurements
from .pareto import composite_metric, pareto_front_mv, pareto_front_3d, pareto_front
from .ladders import (
    build_rqt_pf_ladder,
    build_qt_pf_ladder,
    build_dynres_ladder,
    build_default_ladder,
    build_fixed_ladder,
)
from .evaluation import bd_rate, bd_quality, delta_decode_time, compare_ladders, aggregate_report, distribution_summary
from .harness import plan_jobs, run_jobs, export_measurements

__all__ = [
    'mcp_server',
    'main',
    'tools',
    'EncodePoint',
    'MeasurementSet',
    'SequenceId',
    'parse_measurements',
    'serialize_measurements',
    'composite_metric',
    'pareto_front_mv',
    'pareto_front_3d',
    'pareto_front',
    'build_rqt_pf_ladder',
    'build_qt_pf_ladder',
    'build_dynres_ladder',
    'build_default_ladder',
    'build_fixed_ladder',
    'bd_rate',
    'bd_quality',
    'delta_decode_time',
    'compare_ladders',
    'aggregate_report',
    'distribution_summary',
    'plan_jobs',
    'run_jobs',
    'export_measurements',
]
