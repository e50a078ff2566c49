# Tests package for Bitrate Ladder MCP
