"""CLI entry point; the commands live in :mod:`tagcal.commands`."""

from __future__ import annotations

from .commands import app, console
from .commands.common import configure_logging, resolve_config

__all__ = ["app", "console", "configure_logging", "resolve_config"]
