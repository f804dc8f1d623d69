"""Pieces shared by every subcommand: console, logging, config resolution."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, NoReturn, Optional, Tuple

import click
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape

from .. import config

logger = logging.getLogger(__name__)

console = Console()

EXIT_FAILURE = 1
EXIT_USAGE = 2


def configure_logging(verbose: bool) -> None:
    """Route log records through rich; ``verbose`` lowers the level to DEBUG."""

    root = logging.getLogger()
    if not any(isinstance(h, RichHandler) for h in root.handlers):
        root.addHandler(RichHandler(console=console, show_path=False))
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def collect_cli_overrides(
    ctx: click.Context, raw_cli_values: Dict[str, Tuple[str, object]]
) -> Dict[str, object]:
    """Keep only values the user actually passed (command line or environment)."""

    overrides: Dict[str, object] = {}
    override_names = {"COMMANDLINE", "ENVIRONMENT"}
    for param_name, (config_key, value) in raw_cli_values.items():
        if value is None:
            continue
        source = ctx.get_parameter_source(param_name)
        source_name = getattr(source, "name", None)
        if isinstance(source_name, str) and source_name.upper() in override_names:
            overrides[config_key] = value
    return overrides


def resolve_config(
    raw_cli_values: Dict[str, Tuple[str, object]],
    config_path: Optional[Path] = None,
) -> config.RunConfig:
    """Merge defaults, the config file and CLI flags; exit 2 when invalid."""

    ctx = click.get_current_context()
    overrides = collect_cli_overrides(ctx, raw_cli_values)
    file_values = config.load_config(config_path)
    try:
        runtime = config.merge_configs(config.DEFAULTS, file_values, overrides)
    except config.ConfigError as exc:
        fail(f"Invalid configuration: {exc}", EXIT_USAGE)
    configure_logging(runtime.verbose)
    return runtime


def fail(message: str, code: int = EXIT_FAILURE) -> NoReturn:
    console.print(f"[red]{escape(message)}[/]")
    raise typer.Exit(code=code)
