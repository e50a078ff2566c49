"""Setup script for bitrate-ladder-mcp package."""

from setuptools import setup

if __name__ == "__main__":
    setup()
