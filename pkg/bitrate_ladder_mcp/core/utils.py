"""Utility functions shared by the bitrate ladder modules."""

from typing import Any, Dict, Iterable
import hashlib
import json
import logging
import os
import pathlib
import platform

from dotenv import load_dotenv

# Pick up BITRATE_LADDER_* settings from a local .env before anything reads them
load_dotenv()


def get_config_dir() -> pathlib.Path:
    """Return the platform-specific directory used for logs."""
    override = os.environ.get("BITRATE_LADDER_LOG_DIR", "")
    if override:
        return pathlib.Path(override)

    if platform.system() == "Windows":
        base_path = pathlib.Path(os.environ.get("APPDATA", ""))
    elif platform.system() == "Darwin":  # macOS
        base_path = pathlib.Path.home() / "Library" / "Application Support"
    else:  # Assume Linux/Unix
        base_path = pathlib.Path.home() / ".config"

    return base_path / "bitrate-ladder-mcp"


# Configure logging to file
def setup_logging():
    """Set up logging to file for troubleshooting."""
    log_dir = get_config_dir()
    log_dir.mkdir(parents=True, exist_ok=True)

    log_file = log_dir / "bitrate_ladder_debug.log"
    level_name = os.environ.get("BITRATE_LADDER_LOG_LEVEL", "DEBUG").upper()
    level = getattr(logging, level_name, logging.DEBUG)

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        filename=str(log_file),
        filemode='a'  # Append mode
    )

    logger = logging.getLogger("bitrate-ladder-mcp")
    logger.setLevel(level)

    logger.info(f"Logging initialized. Log file: {log_file}")
    logger.info(f"Platform: {platform.system()} {platform.release()}")

    return logger


# Create the logger instance to be imported by other modules
logger = setup_logging()


def file_digest(path: os.PathLike) -> str:
    """
    Compute the sha256 digest of a file.

    Args:
        path: File to hash

    Returns:
        Hex digest prefixed with "sha256:"
    """
    sha = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            sha.update(chunk)
    return f"sha256:{sha.hexdigest()}"


def canonical_json(data: Any) -> str:
    """Serialize with sorted keys and no whitespace; used for hashing."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def write_json(path: os.PathLike, data: Dict[str, Any]) -> pathlib.Path:
    """Write pretty JSON with a trailing newline and return the path."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8", newline="\n")
    logger.info(f"Wrote {path}")
    return path


def format_float(value: float) -> str:
    """Shortest text that parses back to the same float."""
    return repr(float(value))


def slugify(label: str) -> str:
    """Turn a method label such as 'rqt-pf(0.75)' into a file-name fragment."""
    keep = []
    for char in label.lower():
        if char.isalnum() or char in ".-":
            keep.append(char)
        elif char in "(_ =":
            keep.append("-")
    return "".join(keep).strip("-").replace("--", "-")


def expand_paths(paths: Iterable[os.PathLike], suffix: str) -> list:
    """Expand directories into their files with the given suffix, sorted."""
    result = []
    for entry in paths:
        entry = pathlib.Path(entry)
        if entry.is_dir():
            result.extend(sorted(p for p in entry.iterdir() if p.suffix == suffix))
        else:
            result.append(entry)
    return result
