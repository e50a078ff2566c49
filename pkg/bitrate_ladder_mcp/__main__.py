"""
Bitrate Ladder MCP - Main Entry Point

This module allows the package to be executed directly via `python -m bitrate_ladder_mcp`
"""

import sys

from bitrate_ladder_mcp.core.server import main

if __name__ == "__main__":
    sys.exit(main())
