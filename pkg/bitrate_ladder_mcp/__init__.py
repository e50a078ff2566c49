"""
Bitrate Ladder MCP - Python Package

Decode-time aware bitrate ladders: Pareto fronts over bitrate, decode time
and quality, ladder builders, Bjontegaard-delta evaluation and a command
template driven codec harness, exposed as a CLI and as MCP tools.
"""

from bitrate_ladder_mcp.core.server import main

__version__ = "0.1.0"

__all__ = [
    'EncodePoint',
    'MeasurementSet',
    'SequenceId',
    'parse_measurements',
    'serialize_measurements',
    'composite_metric',
    'pareto_front_mv',
    'pareto_front_3d',
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
    'mcp_server',
    'main'
]

# Import key functions to make them available at package level
from .core import (
    EncodePoint,
    MeasurementSet,
    SequenceId,
    parse_measurements,
    serialize_measurements,
    composite_metric,
    pareto_front_mv,
    pareto_front_3d,
    build_rqt_pf_ladder,
    build_qt_pf_ladder,
    build_dynres_ladder,
    build_default_ladder,
    build_fixed_ladder,
    bd_rate,
    bd_quality,
    delta_decode_time,
    compare_ladders,
    aggregate_report,
    distribution_summary,
    plan_jobs,
    run_jobs,
    export_measurements,
    mcp_server,
    main
)

# Define a main function to be used as a package entry point
def entrypoint():
    """Main entry point for the package when invoked as a console script."""
    return main()
