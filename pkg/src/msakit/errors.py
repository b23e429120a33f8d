"""Shared exception base so the CLI can map failures onto exit codes."""


class ToolkitError(Exception):
    """Base class for all recoverable toolkit errors."""
