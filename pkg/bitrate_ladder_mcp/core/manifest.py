"""Run manifest: what produced a set of artifacts."""

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Iterable, Optional
import hashlib
import json
import os
import pathlib

from dateutil import parser as date_parser

from .api import DataError
from .utils import canonical_json, file_digest, logger, write_json

MANIFEST_FILE_NAME = "run_manifest.json"


def current_timestamp() -> str:
    """ISO-8601 UTC time, pinned by SOURCE_DATE_EPOCH when it is set."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        moment = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        moment = datetime.now(tz=timezone.utc).replace(microsecond=0)
    return moment.isoformat().replace("+00:00", "Z")


@dataclass
class RunManifest:
    """
    Config snapshot, input digests and tool versions of one command run.

    The manifest id hashes everything except the timestamp, so reruns over the
    same inputs stamp their artifacts with the same id.
    """
    config: Dict[str, Any] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    tool_versions: Dict[str, str] = field(default_factory=dict)
    timestamp: str = field(default_factory=current_timestamp)

    @property
    def manifest_id(self) -> str:
        payload = canonical_json({
            "config": self.config,
            "inputs": self.inputs,
            "tool_versions": self.tool_versions,
        })
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def for_inputs(
        cls,
        config: Dict[str, Any],
        input_paths: Iterable[os.PathLike] = (),
        tool_versions: Optional[Dict[str, str]] = None,
    ) -> "RunManifest":
        """Digest each input file; keys are file names so moving a directory keeps the id."""
        inputs = {}
        for path in input_paths:
            path = pathlib.Path(path)
            inputs[path.name] = file_digest(path)
        return cls(config=config, inputs=dict(sorted(inputs.items())), tool_versions=dict(tool_versions or {}))

    def serialize(self) -> Dict[str, Any]:
        return {
            "manifest_id": self.manifest_id,
            "timestamp": self.timestamp,
            "config": self.config,
            "inputs": self.inputs,
            "tool_versions": self.tool_versions,
        }

    @classmethod
    def deserialize(cls, data: Dict[str, Any]) -> "RunManifest":
        try:
            moment = date_parser.isoparse(data["timestamp"])
        except (KeyError, ValueError, TypeError) as e:
            raise DataError(f"Run manifest has no valid timestamp: {e}")
        manifest = cls(
            config=dict(data.get("config", {})),
            inputs=dict(data.get("inputs", {})),
            tool_versions=dict(data.get("tool_versions", {})),
            timestamp=moment.astimezone(timezone.utc).isoformat().replace("+00:00", "Z"),
        )
        stored = data.get("manifest_id")
        if stored is not None and stored != manifest.manifest_id:
            raise DataError(
                "Run manifest id does not match its contents",
                {"stored": stored, "computed": manifest.manifest_id},
            )
        return manifest

    def write(self, out_dir: os.PathLike) -> pathlib.Path:
        logger.debug(f"Run manifest {self.manifest_id}: {len(self.inputs)} inputs")
        return write_json(pathlib.Path(out_dir) / MANIFEST_FILE_NAME, self.serialize())


def read_manifest(path: os.PathLike) -> RunManifest:
    path = pathlib.Path(path)
    try:
        return RunManifest.deserialize(json.loads(path.read_text(encoding="utf-8")))
    except FileNotFoundError:
        raise DataError(f"Run manifest not found: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"Run manifest is not valid JSON: {path}: {e}")
