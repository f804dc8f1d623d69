"""Service layer helpers shared across CLI commands and integration tests."""

from .dataset import Dataset, DatasetError, load_dataset
from .output import OutputManager, ReportPaths

__all__ = [
    "Dataset",
    "DatasetError",
    "OutputManager",
    "ReportPaths",
    "load_dataset",
]
