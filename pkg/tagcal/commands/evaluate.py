from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import typer

from ..core import Scenario
from ..evaluation import (
    EvalReport,
    EvaluationError,
    cdf_csv,
    errors_csv,
    folds_csv,
    make_report,
    render_failures,
    render_report,
    run_cv,
    run_cv_per_scenario,
)
from ..services import DatasetError, OutputManager, load_dataset
from .common import EXIT_FAILURE, EXIT_USAGE, console, fail, resolve_config

logger = logging.getLogger(__name__)


def register_evaluate(app: typer.Typer) -> None:
    app.command(name="evaluate", help="Leave-one-session-out evaluation of a dataset")(
        evaluate
    )


def write_report(output: OutputManager, report: EvalReport, with_errors: bool = True) -> str:
    paths = output.report_paths()
    text = render_report(report)
    output.write(paths.text_path, text)
    output.write(paths.folds_path, folds_csv(report))
    output.write(paths.cdf_path, cdf_csv(report))
    if with_errors:
        output.write(paths.errors_path, errors_csv(report))
    return text


def evaluate(
    dataset_dir: Path = typer.Argument(..., help="Dataset directory from `simulate`"),
    output_dir: Optional[str] = typer.Option(
        None, "-o", "--output", "--output-dir", help="Report directory"
    ),
    scenario: Optional[str] = typer.Option(
        None, "--scenario", help="Evaluate one scenario's sessions only"
    ),
    per_scenario: Optional[bool] = typer.Option(
        None,
        "--per-scenario/--combined",
        help="Train and test within each scenario instead of on all sessions",
    ),
    workers: Optional[int] = typer.Option(
        None, "--workers", min=1, help="Folds evaluated in parallel"
    ),
    epochs: Optional[int] = typer.Option(None, "--epochs", min=1, help="Maximum LM epochs"),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, help="Weight initialisation seed"),
    window: Optional[int] = typer.Option(
        None, "--window", min=1, help="Moving-average window in samples"
    ),
    config_file: Optional[Path] = typer.Option(
        None, "--config", help="Config file to use instead of the user config"
    ),
    verbose: bool = typer.Option(False, "-v", "--verbose", help="Verbose logging"),
) -> None:
    raw_cli_values: Dict[str, Tuple[str, object]] = {
        "per_scenario": ("per_scenario", per_scenario),
        "workers": ("workers", workers),
        "epochs": ("max_epochs", epochs),
        "seed": ("seed", seed),
        "window": ("smoothing_window", window),
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
    if len(sessions) < 2:
        fail(
            f"Leave-one-session-out needs at least 2 sessions, found {len(sessions)}",
            EXIT_USAGE,
        )

    runner = run_cv_per_scenario if runtime.per_scenario else run_cv
    try:
        folds = runner(sessions, dataset.technology, runtime.evaluation())
    except EvaluationError as exc:
        fail(str(exc), EXIT_USAGE)

    target = Path(output_dir) if output_dir else Path(runtime.output_dir) / "report"
    output = OutputManager(target)
    try:
        report = make_report(folds, technology=dataset.technology)
    except EvaluationError as exc:
        if not any(fold.failed for fold in folds):
            fail(f"Evaluation failed: {exc}")
        text_path = output.report_paths().text_path
        try:
            output.write(text_path, render_failures(folds, dataset.technology))
        except (OSError, ValueError) as write_exc:
            fail(f"Evaluation failed: {exc}; cannot write report: {write_exc}")
        fail(f"Evaluation failed: {exc}; fold failures written to {text_path}")
    try:
        text = write_report(output, report)
    except (OSError, ValueError) as exc:
        fail(f"Cannot write report: {exc}")

    console.print(text, markup=False, highlight=False)
    if not report.ok:
        console.print(
            f"[red]{len(report.failed)} fold(s) failed; partial report written to "
            f"{output.base_dir}[/]"
        )
        raise typer.Exit(code=EXIT_FAILURE)
    console.print(f"[green]Report written to {output.base_dir}[/]")
