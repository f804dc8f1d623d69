from __future__ import annotations

from pathlib import Path
from typing import Optional

import typer

from ..core import Technology
from ..evaluation import EvaluationError, parse_errors_csv, report_from_errors
from ..services import OutputManager
from .common import EXIT_USAGE, configure_logging, console, fail
from .evaluate import write_report


def register_report(app: typer.Typer) -> None:
    app.command(name="report", help="Re-render a report from a saved errors.csv")(report)


def report(
    report_dir: Path = typer.Argument(..., help="Directory holding errors.csv"),
    output_dir: Optional[Path] = typer.Option(
        None, "-o", "--output", "--output-dir", help="Write the report here instead"
    ),
    tech: Optional[str] = typer.Option(
        None, "--tech", help="Technology shown in the heading: ble or uwb"
    ),
    verbose: bool = typer.Option(False, "-v", "--verbose", help="Verbose logging"),
) -> None:
    configure_logging(verbose)
    technology = None
    if tech is not None:
        try:
            technology = Technology(tech.lower())
        except ValueError:
            fail(f"Unknown technology: {tech}", EXIT_USAGE)
    source = report_dir / "errors.csv"
    try:
        text = source.read_text(encoding="utf-8")
    except OSError as exc:
        fail(f"Cannot read {source}: {exc}", EXIT_USAGE)
    try:
        rebuilt = report_from_errors(parse_errors_csv(text, str(source)), technology)
    except EvaluationError as exc:
        fail(str(exc))

    output = OutputManager(output_dir or report_dir)
    try:
        rendered = write_report(output, rebuilt, with_errors=output_dir is not None)
    except (OSError, ValueError) as exc:
        fail(f"Cannot write report: {exc}")
    console.print(rendered, markup=False, highlight=False)
