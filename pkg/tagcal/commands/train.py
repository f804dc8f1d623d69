from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import typer

from ..calibration import TrainingError, dumps_model, train_records
from ..core import Scenario
from ..services import DatasetError, OutputManager, load_dataset
from .common import EXIT_USAGE, console, fail, resolve_config

logger = logging.getLogger(__name__)


def register_train(app: typer.Typer) -> None:
    app.command(name="train", help="Train a calibration model on a dataset")(train)


def train(
    dataset_dir: Path = typer.Argument(..., help="Dataset directory from `simulate`"),
    hold_out: Optional[str] = typer.Option(
        None, "--hold-out", help="Session id to leave out of training"
    ),
    out: Optional[Path] = typer.Option(
        None, "--out", help="Model file (default <output>/<tech>-<fold>.model)"
    ),
    output_dir: Optional[str] = typer.Option(
        None, "-o", "--output", "--output-dir", help="Directory for the default model path"
    ),
    scenario: Optional[str] = typer.Option(
        None, "--scenario", help="Train on one scenario only"
    ),
    epochs: Optional[int] = typer.Option(None, "--epochs", min=1, help="Maximum LM epochs"),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, help="Weight initialisation seed"),
    config_file: Optional[Path] = typer.Option(
        None, "--config", help="Config file to use instead of the user config"
    ),
    verbose: bool = typer.Option(False, "-v", "--verbose", help="Verbose logging"),
) -> None:
    raw_cli_values: Dict[str, Tuple[str, object]] = {
        "output_dir": ("output_dir", output_dir),
        "epochs": ("max_epochs", epochs),
        "seed": ("seed", seed),
        "verbose": ("verbose", verbose),
    }
    runtime = resolve_config(raw_cli_values, config_file)

    try:
        dataset = load_dataset(dataset_dir)
    except DatasetError as exc:
        fail(str(exc))

    sessions = list(dataset.sessions)
    if scenario is not None:
        try:
            sessions = list(dataset.by_scenario(Scenario(scenario.lower())))
        except ValueError:
            fail(f"Unknown scenario: {scenario}", EXIT_USAGE)
    if hold_out is not None:
        if hold_out not in {s.id for s in sessions}:
            fail(f"Session '{hold_out}' is not in the training selection", EXIT_USAGE)
        sessions = [s for s in sessions if s.id != hold_out]
    records = [record for session in sessions for record in session.records]
    if not records:
        fail("No training records selected", EXIT_USAGE)

    logger.info(
        "Training on %d sessions (%d records)%s",
        len(sessions),
        len(records),
        f", holding out {hold_out}" if hold_out else "",
    )
    try:
        result = train_records(records, runtime.train)
    except TrainingError as exc:
        fail(f"Training failed: {exc}")

    if out is None:
        output = OutputManager(runtime.output_dir)
        model_path = output.model_path(f"{dataset.technology.value}-{hold_out or 'all'}")
    else:
        output = OutputManager(out.expanduser().resolve().parent)
        model_path = output.base_dir / out.name
    try:
        output.write(model_path, dumps_model(result.model))
        log_path = output.write_training_log(model_path, result.history)
    except (OSError, ValueError) as exc:
        fail(f"Cannot write model: {exc}")

    console.print(
        f"[green]Model saved to {model_path}[/] "
        f"({len(result.history)} epochs, stop: {result.stop_reason}, "
        f"gamma {result.model.gamma:.1f})"
    )
    console.print(f"Training log: {log_path}")
