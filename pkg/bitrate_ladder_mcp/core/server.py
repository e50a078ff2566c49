"""MCP server and command-line entry point."""

from mcp.server.fastmcp import FastMCP
import argparse
import sys
from typing import List, Optional

from .api import EXIT_OK, LadderError, UsageError
from .config import parse_float_list
from .resources import list_resources, get_resource
from .utils import logger

# Initialize FastMCP server
mcp_server = FastMCP("bitrate-ladder", use_consistent_tool_format=True)

# Register resource URIs
mcp_server.resource(uri="bitrate-ladder://ladders")(list_resources)
mcp_server.resource(uri="bitrate-ladder://ladders/{ladder_id}")(get_resource)


def serve(transport: str = "stdio", host: str = "localhost", port: int = 8080, sse_response: bool = False) -> int:
    """Run the MCP server until interrupted."""
    # Registers the tools on mcp_server
    from . import tools  # noqa: F401

    if transport == "stdio" and (port != 8080 or host != "localhost" or sse_response):
        logger.warning("HTTP transport arguments (--port, --host, --sse-response) are ignored when using stdio transport")
        print("Warning: HTTP transport arguments are ignored when using stdio transport")

    if transport == "streamable-http":
        logger.info(f"Starting MCP server with Streamable HTTP transport on {host}:{port}")
        logger.info(f"Response format: {'SSE' if sse_response else 'JSON'}")
        print("Starting bitrate ladder MCP server with Streamable HTTP transport")
        print(f"Server will listen on {host}:{port}")
        print(f"Response format: {'SSE' if sse_response else 'JSON'}")

        mcp_server.settings.host = host
        mcp_server.settings.port = port
        mcp_server.settings.stateless_http = True
        mcp_server.settings.json_response = not sse_response
        mcp_server.run(transport="streamable-http")
    else:
        logger.info("Starting MCP server with stdio transport")
        mcp_server.run(transport="stdio")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    # Flags shared by every pipeline subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config (harness and ladder settings)")
    common.add_argument("--out", default="out", help="Output directory (default: out)")
    common.add_argument("--jobs", type=int, default=1, help="Sequences processed in parallel (default: 1)")

    parser = argparse.ArgumentParser(
        prog="bitrate-ladder-mcp",
        description="Decode-time aware bitrate ladders: measure, extract fronts, build ladders, compare, report",
    )
    parser.add_argument("--version", action="store_true", help="Show the version of the package")
    commands = parser.add_subparsers(dest="command")

    measure = commands.add_parser("measure", parents=[common], help="Encode, decode and score the (R x Q) grid")
    measure.add_argument("sequences", help="CSV with sequence,native_resolution,fps,frame_count")
    measure.add_argument("--resume", action="store_true", help="Skip jobs recorded as done in <out>/jobs.jsonl")

    for name, help_text in (("front", "Write Pareto fronts"), ("ladder", "Build ladders")):
        sub = commands.add_parser(name, parents=[common], help=help_text)
        sub.add_argument("measurements", help="Measurement CSV")
        sub.add_argument("--metadata", help="Sequence metadata CSV")
        sub.add_argument("--alpha", type=float, help="Decode-time weight in [0, 1]")
        sub.add_argument("--metric", choices=["psnr", "xpsnr", "vmaf"], help="Quality metric (default: xpsnr)")
    commands.choices["front"].add_argument("--space", choices=["mv", "3d"], default="mv", help="Objective space")
    commands.choices["ladder"].add_argument(
        "--method", required=True, choices=["rqt-pf", "qt-pf", "dynres", "fixed", "default"], help="Ladder method"
    )
    commands.choices["ladder"].add_argument("--targets", help="Comma-separated target bitrates in Mbps")

    compare = commands.add_parser("compare", parents=[common], help="BD metrics and decode-time delta versus a reference")
    compare.add_argument("--methods", nargs="+", required=True, help="Ladder files or directories")
    compare.add_argument("--reference", nargs="+", required=True, help="Reference ladder files or directories")
    compare.add_argument("--plain", action="store_true", help="Do not mark best and second-best values")

    report = commands.add_parser("report", parents=[common], help="Histograms of ladder fields")
    report.add_argument("ladders", nargs="+", help="Ladder files or directories")
    report.add_argument("--fields", default="decode_time,bitrate,xpsnr,vmaf", help="Comma-separated fields")
    report.add_argument("--bins", type=int, help="Number of bins (default: 20)")

    benchmark = commands.add_parser("benchmark", parents=[common], help="All methods versus the fixed ladder")
    benchmark.add_argument("measurements", help="Measurement CSV")
    benchmark.add_argument("--metadata", help="Sequence metadata CSV")
    benchmark.add_argument("--alphas", help="Comma-separated alpha values (default: 0.25,0.5,0.75)")
    benchmark.add_argument("--metric", choices=["psnr", "xpsnr", "vmaf"], help="Quality metric (default: xpsnr)")
    benchmark.add_argument("--targets", help="Comma-separated target bitrates in Mbps")
    benchmark.add_argument("--bins", type=int, help="Number of histogram bins")
    benchmark.add_argument("--plain", action="store_true", help="Do not mark best and second-best values")

    server = commands.add_parser("serve", help="Run the MCP server")
    server.add_argument("--transport", type=str, choices=["stdio", "streamable-http"], default="stdio",
                        help="Transport method: 'stdio' for MCP clients (default), 'streamable-http' for HTTP API access")
    server.add_argument("--port", type=int, default=8080,
                        help="Port for Streamable HTTP transport (default: 8080)")
    server.add_argument("--host", type=str, default="localhost",
                        help="Host for Streamable HTTP transport (default: localhost)")
    server.add_argument("--sse-response", action="store_true",
                        help="Use SSE response format instead of JSON (default: JSON)")
    return parser


def run_command(args: argparse.Namespace) -> int:
    from . import cli

    if args.command == "serve":
        return serve(args.transport, args.host, args.port, args.sse_response)
    if args.command == "measure":
        if not args.config:
            raise UsageError("measure needs --config with the harness settings")
        cli.cmd_measure(args.config, args.sequences, args.out, resume=args.resume)
    elif args.command == "front":
        cli.cmd_front(args.measurements, args.space, args.out, args.alpha, args.metric,
                      args.config, args.metadata, args.jobs)
    elif args.command == "ladder":
        cli.cmd_ladder(args.measurements, args.method, args.out, args.alpha, args.metric,
                       parse_float_list(args.targets), args.config, args.metadata, args.jobs)
    elif args.command == "compare":
        cli.cmd_compare(args.methods, args.reference, args.out, marks=not args.plain)
    elif args.command == "report":
        fields = [f.strip() for f in args.fields.split(",") if f.strip()]
        cli.cmd_report(args.ladders, args.out, fields, args.bins, args.config)
    elif args.command == "benchmark":
        cli.cmd_benchmark(args.measurements, args.out, parse_float_list(args.alphas), args.metric,
                          parse_float_list(args.targets), args.config, args.metadata, args.bins,
                          args.jobs, marks=not args.plain)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the package"""
    logger.info("bitrate-ladder-mcp starting")
    logger.debug(f"Python version: {sys.version}")
    logger.debug(f"Args: {sys.argv if argv is None else argv}")

    parser = build_parser()
    args = parser.parse_args(argv)

    if args.version:
        from bitrate_ladder_mcp import __version__
        logger.info(f"Displaying version: {__version__}")
        print(f"Bitrate Ladder MCP v{__version__}")
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_OK

    try:
        return run_command(args)
    except LadderError as e:
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code
