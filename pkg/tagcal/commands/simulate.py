from __future__ import annotations

import dataclasses
import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import typer

from .. import config
from ..core import GeometryError
from ..services import OutputManager
from ..simulator import gen_dataset
from .common import EXIT_USAGE, console, fail, resolve_config

logger = logging.getLogger(__name__)


def register_simulate(app: typer.Typer) -> None:
    app.command(name="simulate", help="Simulate a BLE or UWB testbed dataset")(simulate)


def simulate(
    tech: Optional[str] = typer.Option(None, "--tech", help="Technology: ble or uwb"),
    output_dir: Optional[str] = typer.Option(
        None, "-o", "--output", "--output-dir", help="Dataset directory to write"
    ),
    scenarios: Optional[str] = typer.Option(
        None, "--scenarios", help="Comma-separated scenarios (walking,trolley)"
    ),
    sessions: Optional[int] = typer.Option(
        None, "--sessions", min=2, help="Sessions per scenario"
    ),
    duration: Optional[float] = typer.Option(
        None, "--duration", help="Session length in seconds (default 48 BLE / 90 UWB)"
    ),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, help="Root random seed"),
    nlos_prob: Optional[float] = typer.Option(
        None, "--nlos-prob", help="Probability that a UWB link is NLOS"
    ),
    nlos_bias_max: Optional[float] = typer.Option(
        None, "--nlos-bias-max", help="Largest NLOS range bias in metres"
    ),
    ranging_sigma: Optional[float] = typer.Option(
        None, "--ranging-sigma", help="UWB ranging noise in metres"
    ),
    ghost_prob: Optional[float] = typer.Option(
        None, "--ghost-prob", help="Probability of a BLE multipath ghost"
    ),
    ble_truth: Optional[str] = typer.Option(
        None, "--ble-truth", help="BLE truth source: trajectory or uwb"
    ),
    aoa_filter: Optional[str] = typer.Option(
        None, "--aoa-filter", help="AoA filter mode: per-slot or pooled"
    ),
    manifest: Optional[Path] = typer.Option(
        None, "--manifest", help="Reproduce the run described by a dataset manifest"
    ),
    config_file: Optional[Path] = typer.Option(
        None, "--config", help="Config file to use instead of the user config"
    ),
    verbose: bool = typer.Option(False, "-v", "--verbose", help="Verbose logging"),
) -> None:
    raw_cli_values: Dict[str, Tuple[str, object]] = {
        "tech": ("technology", tech),
        "output_dir": ("output_dir", output_dir),
        "scenarios": ("scenarios", scenarios),
        "sessions": ("sessions_per_scenario", sessions),
        "duration": ("session_duration", duration),
        "seed": ("seed", seed),
        "nlos_prob": ("nlos_prob", nlos_prob),
        "nlos_bias_max": ("nlos_bias_max", nlos_bias_max),
        "ranging_sigma": ("ranging_sigma", ranging_sigma),
        "ghost_prob": ("multipath_ghost_prob", ghost_prob),
        "ble_truth": ("ble_truth", ble_truth),
        "aoa_filter": ("aoa_filter_mode", aoa_filter),
        "verbose": ("verbose", verbose),
    }
    runtime = resolve_config(raw_cli_values, config_file)
    if manifest is not None:
        try:
            replayed = config.RunConfig.from_manifest(manifest)
        except config.ConfigError as exc:
            fail(str(exc), EXIT_USAGE)
        runtime = dataclasses.replace(replayed, output_dir=runtime.output_dir)

    try:
        dataset = gen_dataset(
            runtime.technology,
            runtime.scenarios,
            runtime.sessions_per_scenario,
            runtime.noise,
            runtime.layout(),
            runtime.area,
            session_duration=runtime.session_duration,
            target_height=runtime.target_height,
            ble_truth=runtime.ble_truth,
            aoa_filter_mode=runtime.aoa_filter_mode,
            tracker_config=runtime.tracker,
        )
    except (ValueError, GeometryError) as exc:
        fail(f"Simulation failed: {exc}", EXIT_USAGE)

    try:
        output = OutputManager(runtime.output_dir)
        for session in dataset:
            output.write_session(session)
        sections = config.manifest_sections(runtime, [s.id for s in dataset])
        output.write_manifest(config.dump_toml(sections))
    except (OSError, ValueError) as exc:
        fail(f"Cannot write dataset: {exc}")

    records = sum(len(s) for s in dataset)
    console.print(
        f"[green]Wrote {len(dataset)} {runtime.technology.value.upper()} sessions "
        f"({records} records) to {output.base_dir}[/]"
    )
