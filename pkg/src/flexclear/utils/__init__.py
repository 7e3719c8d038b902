"""Logging helpers."""

__all__: list[str] = []
