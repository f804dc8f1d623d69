from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional

import typer

from .. import config
from .common import console

config_app = typer.Typer(help="Manage tagcal configuration")


def register_config(app: typer.Typer) -> None:
    app.add_typer(config_app, name="config")


def default_sections() -> Dict[str, Dict[str, object]]:
    values = dict(config.DEFAULTS)
    values["output_dir"] = str(Path.home() / "tagcal")
    return config.config_sections(values)


@config_app.command("init")
def config_init(
    force: bool = typer.Option(False, "--force", help="Overwrite if exists"),
    path: Optional[Path] = typer.Option(
        None, "--path", help="Write here instead of the user config location"
    ),
) -> None:
    """Create a default config file at the standard location."""

    target = path or config.get_config_path()
    target.parent.mkdir(parents=True, exist_ok=True)
    if target.exists() and not force:
        console.print(
            f"[yellow]Config already exists at {target}. Use --force to overwrite.[/]"
        )
        raise typer.Exit(code=1)

    target.write_text(config.dump_toml(default_sections()), encoding="utf-8")
    console.print(f"Default configuration file created at {target}")


@config_app.command("show")
def config_show(
    config_file: Optional[Path] = typer.Option(
        None, "--config", help="Config file to use instead of the user config"
    ),
) -> None:
    """Print the effective configuration (defaults merged with the config file)."""

    try:
        runtime = config.merge_configs(config.DEFAULTS, config.load_config(config_file), {})
    except config.ConfigError as exc:
        console.print(f"[red]Invalid configuration: {exc}[/]")
        raise typer.Exit(code=2)
    console.print(
        config.dump_toml(config.config_sections(runtime.flat())),
        markup=False,
        highlight=False,
    )
