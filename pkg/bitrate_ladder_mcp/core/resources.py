"""Resource handling for ladders built during a server session."""

from typing import Any, Dict

from .ladders import Ladder, ladder_file_name

# Ladders built by the build_ladder tool, by ladder id
ladder_store: Dict[str, Dict[str, Any]] = {}


def register_ladder(ladder: Ladder) -> str:
    """Keep a ladder's JSON for the resource endpoints and return its id."""
    ladder_id = ladder_file_name(ladder)[: -len(".json")]
    ladder_store[ladder_id] = {"name": f"{ladder.display_name} ladder for {ladder.sequence}", "ladder": ladder.to_json()}
    return ladder_id


async def list_resources() -> Dict[str, Any]:
    """
    List the ladders built so far

    Returns:
        Dictionary with resources list
    """
    resources = []
    for ladder_id, entry in sorted(ladder_store.items()):
        resources.append({
            "uri": f"bitrate-ladder://ladders/{ladder_id}",
            "mimeType": "application/json",
            "name": entry["name"],
        })
    return {"resources": resources}


async def get_resource(ladder_id: str) -> Dict[str, Any]:
    """
    Get one ladder by id

    Args:
        ladder_id: `<sequence>__<method>` as returned by build_ladder

    Returns:
        The ladder JSON, or an error entry
    """
    if ladder_id in ladder_store:
        return ladder_store[ladder_id]["ladder"]
    return {"error": f"Resource not found: {ladder_id}"}
