from pathlib import Path

import pytest

from tagcal.calibration import EpochLog
from tagcal.services import OutputManager
from tagcal.services.output import TRAINING_LOG_HEADER


def test_output_manager_creates_directory(tmp_path):
    target = tmp_path / "nested" / "out"

    manager = OutputManager(target)

    assert manager.base_dir == target.resolve()
    assert target.is_dir()


def test_paths_are_sanitised(tmp_path):
    manager = OutputManager(tmp_path)

    assert manager.session_path("walking-1").name == "walking-1.csv"
    assert manager.session_path("../evil").parent == manager.base_dir
    assert manager.model_path("uwb-walking-1").name == "uwb-walking-1.model"
    assert manager.model_path("ble.model").name == "ble.model"
    assert manager.manifest_path.name == "manifest.toml"


def test_report_paths(tmp_path):
    paths = OutputManager(tmp_path).report_paths()

    names = [p.name for p in (paths.text_path, paths.folds_path, paths.cdf_path, paths.errors_path)]
    assert names == ["report.txt", "folds.csv", "cdf.csv", "errors.csv"]


def test_write_refuses_paths_outside_base(tmp_path):
    manager = OutputManager(tmp_path / "out")

    with pytest.raises(ValueError):
        manager.write(tmp_path / "elsewhere.txt", "x")


def test_training_log_is_written_beside_the_model(tmp_path):
    manager = OutputManager(tmp_path)
    model = manager.model_path("uwb-all")
    history = [
        EpochLog(
            epoch=1, loss_before=2.0, loss_after=1.5, alpha=0.01, beta=4.0, gamma=3.5, mu=1e-4
        ),
        EpochLog(
            epoch=2, loss_before=1.5, loss_after=1.25, alpha=0.02, beta=5.0, gamma=4.0, mu=1e-5
        ),
    ]

    log = manager.write_training_log(model, history)

    assert log == Path(str(model) + ".log.csv")
    lines = log.read_text().splitlines()
    assert lines[0] == ",".join(TRAINING_LOG_HEADER)
    assert lines[1] == "1,2,1.5,0.01,4,3.5,0.0001"
    assert len(lines) == 3
