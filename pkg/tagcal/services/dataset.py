"""Session CSV serialisation and dataset discovery."""

from __future__ import annotations

import csv
import io
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Final, Optional, Sequence, Tuple

from ..core import (
    BleRecord,
    GeometryError,
    Point2,
    Record,
    Scenario,
    Session,
    Technology,
    UwbRecord,
)
from ..formatting import fmt_coordinate, fmt_measurement

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

MANIFEST_NAME: Final[str] = "manifest.toml"

BLE_HEADER: Final[Tuple[str, ...]] = (
    "t",
    *(f"rssi{i}" for i in range(1, 9)),
    *(f"aoa{i}" for i in range(1, 9)),
    "ble_x",
    "ble_y",
    "uwb_x",
    "uwb_y",
)
UWB_HEADER: Final[Tuple[str, ...]] = (
    "t",
    *(f"cir{i}" for i in range(1, 5)),
    *(f"psa{i}" for i in range(1, 5)),
    *(f"d{i}" for i in range(1, 5)),
    "uwb_x",
    "uwb_y",
    "mocap_x",
    "mocap_y",
)
HEADERS: Final[Dict[Technology, Tuple[str, ...]]] = {
    Technology.BLE: BLE_HEADER,
    Technology.UWB: UWB_HEADER,
}


class DatasetError(ValueError):
    """Raised when a dataset file does not match its schema."""


@dataclass(frozen=True)
class Dataset:
    technology: Technology
    sessions: Tuple[Session, ...]
    directory: Path
    manifest: Optional[Dict[str, Any]] = None

    def by_scenario(self, scenario: Scenario) -> Tuple[Session, ...]:
        return tuple(s for s in self.sessions if s.scenario is scenario)

    def session(self, session_id: str) -> Session:
        for session in self.sessions:
            if session.id == session_id:
                return session
        known = ", ".join(s.id for s in self.sessions)
        raise DatasetError(f"No session '{session_id}' in {self.directory} (have: {known})")


def _baseline(record: Record) -> Point2:
    if record.baseline is None:
        raise DatasetError(f"Record at t={record.timestamp} has no baseline position")
    return record.baseline


def _row(record: Record) -> list[str]:
    baseline = _baseline(record)
    coords = [
        fmt_coordinate(baseline.x),
        fmt_coordinate(baseline.y),
        fmt_coordinate(record.truth.x),
        fmt_coordinate(record.truth.y),
    ]
    if isinstance(record, BleRecord):
        values = [*record.rssi, *record.aoa]
        return [fmt_measurement(record.timestamp), *map(fmt_measurement, values), *coords]
    return [
        fmt_measurement(record.timestamp),
        *map(fmt_measurement, record.cir),
        *(str(int(p)) for p in record.psa),
        *map(fmt_measurement, record.dist),
        *coords,
    ]


def session_to_csv(session: Session) -> str:
    technology = session.technology or Technology.UWB
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(HEADERS[technology])
    writer.writerows(_row(record) for record in session.records)
    return buffer.getvalue()


def _parse_row(technology: Technology, row: Sequence[str]) -> Record:
    values = [float(cell) for cell in row]
    baseline = Point2(values[-4], values[-3])
    truth = Point2(values[-2], values[-1])
    if technology is Technology.BLE:
        return BleRecord(
            timestamp=values[0],
            rssi=tuple(values[1:9]),
            aoa=tuple(values[9:17]),
            truth=truth,
            baseline=baseline,
        )
    return UwbRecord(
        timestamp=values[0],
        cir=tuple(values[1:5]),
        psa=tuple(int(cell) for cell in row[5:9]),
        dist=tuple(values[9:13]),
        truth=truth,
        baseline=baseline,
    )


def technology_of_header(header: Sequence[str], source: str = "<csv>") -> Technology:
    for technology, expected in HEADERS.items():
        if tuple(header) == expected:
            return technology
    raise DatasetError(f"{source}:1: header matches neither the BLE nor the UWB schema")


def scenario_of(session_id: str) -> Scenario:
    prefix = session_id.split("-", 1)[0].lower()
    try:
        return Scenario(prefix)
    except ValueError:
        raise DatasetError(
            f"Cannot tell the scenario of session '{session_id}' "
            "(expected a walking-N or trolley-N name)"
        ) from None


def parse_session_csv(
    text: str,
    session_id: str,
    scenario: Optional[Scenario] = None,
    source: str = "<csv>",
) -> Session:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise DatasetError(f"{source}: file is empty")
    technology = technology_of_header(header, source)
    width = len(HEADERS[technology])
    records: list[Record] = []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != width:
            raise DatasetError(
                f"{source}:{line}: expected {width} columns, got {len(row)}"
            )
        try:
            records.append(_parse_row(technology, row))
        except (ValueError, GeometryError) as exc:
            raise DatasetError(f"{source}:{line}: {exc}") from None
    try:
        return Session(
            id=session_id,
            scenario=scenario or scenario_of(session_id),
            records=tuple(records),
        )
    except GeometryError as exc:
        raise DatasetError(f"{source}: {exc}") from None


def read_manifest(directory: Path) -> Optional[Dict[str, Any]]:
    path = directory / MANIFEST_NAME
    if not path.exists():
        return None
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise DatasetError(f"Cannot read manifest {path}: {exc}") from exc


def load_dataset(directory: Path | str) -> Dataset:
    """Load every session CSV; the manifest, when present, fixes the order."""

    root = Path(directory).expanduser()
    if not root.is_dir():
        raise DatasetError(f"Dataset directory not found: {root}")
    manifest = read_manifest(root)
    files = {path.stem: path for path in sorted(root.glob("*.csv"))}
    order = list(files)
    if manifest is not None:
        listed = manifest.get("dataset", {}).get("sessions")
        if isinstance(listed, list):
            missing = [name for name in listed if name not in files]
            if missing:
                raise DatasetError(f"Manifest lists missing sessions: {', '.join(missing)}")
            order = [str(name) for name in listed]
    if not order:
        raise DatasetError(f"No session CSV files in {root}")

    sessions = []
    for name in order:
        path = files[name]
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise DatasetError(f"Cannot read {path}: {exc}") from exc
        sessions.append(parse_session_csv(text, name, source=str(path)))

    technologies = {s.technology for s in sessions if s.technology is not None}
    if len(technologies) != 1:
        raise DatasetError(f"{root} mixes or lacks record types")
    technology = technologies.pop()
    logger.info("Loaded %d %s sessions from %s", len(sessions), technology.value, root)
    return Dataset(
        technology=technology,
        sessions=tuple(sessions),
        directory=root,
        manifest=manifest,
    )
