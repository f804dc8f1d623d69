from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .. import formatting
from ..calibration import EpochLog
from ..core import Session
from .dataset import MANIFEST_NAME, session_to_csv

TRAINING_LOG_HEADER = (
    "epoch",
    "loss_before",
    "loss_after",
    "alpha",
    "beta",
    "gamma",
    "mu",
)


@dataclass(slots=True)
class ReportPaths:
    """Container for evaluation artefact paths."""

    text_path: Path
    folds_path: Path
    cdf_path: Path
    errors_path: Path


class OutputManager:
    """Own an output directory and write artefacts inside it."""

    def __init__(self, base_dir: Path | str) -> None:
        self.base_dir = Path(base_dir).expanduser().resolve()
        self.base_dir.mkdir(parents=True, exist_ok=True)

    def write(self, path: Path, content: str) -> Path:
        formatting.write_text_file(str(path), str(self.base_dir), content)
        return path

    def session_path(self, session_id: str) -> Path:
        return self.base_dir / f"{formatting.sanitize_filename(session_id)}.csv"

    @property
    def manifest_path(self) -> Path:
        return self.base_dir / MANIFEST_NAME

    def write_session(self, session: Session) -> Path:
        return self.write(self.session_path(session.id), session_to_csv(session))

    def write_manifest(self, content: str) -> Path:
        return self.write(self.manifest_path, content)

    def report_paths(self) -> ReportPaths:
        return ReportPaths(
            text_path=self.base_dir / "report.txt",
            folds_path=self.base_dir / "folds.csv",
            cdf_path=self.base_dir / "cdf.csv",
            errors_path=self.base_dir / "errors.csv",
        )

    def model_path(self, name: str) -> Path:
        stem = formatting.sanitize_filename(name)
        return self.base_dir / (stem if stem.endswith(".model") else f"{stem}.model")

    @staticmethod
    def training_log_path(model_path: Path) -> Path:
        return model_path.with_name(model_path.name + ".log.csv")

    def write_training_log(self, model_path: Path, history: Sequence[EpochLog]) -> Path:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(TRAINING_LOG_HEADER)
        for entry in history:
            writer.writerow(
                [
                    entry.epoch,
                    *(
                        formatting.fmt_measurement(v)
                        for v in (
                            entry.loss_before,
                            entry.loss_after,
                            entry.alpha,
                            entry.beta,
                            entry.gamma,
                            entry.mu,
                        )
                    ),
                ]
            )
        return self.write(self.training_log_path(model_path), buffer.getvalue())
