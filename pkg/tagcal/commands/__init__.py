from __future__ import annotations

import typer

from . import config as config_cmd
from . import evaluate as evaluate_cmd
from . import report as report_cmd
from . import simulate as simulate_cmd
from . import train as train_cmd
from .common import console

app = typer.Typer(
    no_args_is_help=True,
    help="Simulate BLE/UWB testbeds and calibrate their position estimates.",
)

# Register commands
simulate_cmd.register_simulate(app)
train_cmd.register_train(app)
evaluate_cmd.register_evaluate(app)
report_cmd.register_report(app)
config_cmd.register_config(app)

__all__ = ["app", "console"]
