"""Provenance records embedded in every output file."""

from typing import Any

from flexclear import __version__
from flexclear.config import RunConfig


def build_provenance(config: RunConfig, command: str) -> dict[str, Any]:
    """Version, command and the full resolved configuration of a run.

    Nothing time- or host-dependent goes in, so reruns of the same
    configuration write identical files.
    """
    return {"flexclear_version": __version__, "command": command, "config": config.to_dict()}


def flatten(data: dict[str, Any], prefix: str = "") -> list[tuple[str, str]]:
    """Dotted ``key: value`` pairs of a nested mapping, in insertion order."""
    pairs: list[tuple[str, str]] = []
    for key, value in data.items():
        name = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(value, dict) and value:
            pairs.extend(flatten(value, name))
        else:
            pairs.append((name, _scalar(value)))
    return pairs


def _scalar(value: object) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dict):
        return "{}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_scalar(v) if not isinstance(v, dict) else str(v) for v in value) + "]"
    return str(value)
