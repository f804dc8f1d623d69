"""Shared domain types, geometry primitives, the error metric and smoothing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

DEFAULT_SMOOTHING_WINDOW = 5


class GeometryError(ValueError):
    """Raised when a domain value violates its construction invariants."""


class Technology(str, Enum):
    BLE = "ble"
    UWB = "uwb"


class Scenario(str, Enum):
    WALKING = "walking"
    TROLLEY = "trolley"


def _check_finite(*values: float) -> None:
    for value in values:
        if not math.isfinite(value):
            raise GeometryError(f"Coordinate must be finite, got {value!r}")


@dataclass(frozen=True, slots=True)
class Point2:
    x: float
    y: float

    def __post_init__(self) -> None:
        _check_finite(self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "Point2":
        x, y = (float(v) for v in values)
        return cls(x, y)


@dataclass(frozen=True, slots=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        _check_finite(self.x, self.y, self.z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def plan(self) -> Point2:
        return Point2(self.x, self.y)

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "Point3":
        x, y, z = (float(v) for v in values)
        return cls(x, y, z)


@dataclass(frozen=True, slots=True)
class Area:
    """Axis-aligned rectangular test area in metres."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        _check_finite(self.x_min, self.y_min, self.x_max, self.y_max)
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise GeometryError("Area must have positive width and height")

    @classmethod
    def of_size(cls, width: float, height: float) -> "Area":
        return cls(0.0, 0.0, width, height)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def center(self) -> Point2:
        return Point2(
            (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0
        )

    def contains(self, point: Point2, tol: float = 1e-9) -> bool:
        return (
            self.x_min - tol <= point.x <= self.x_max + tol
            and self.y_min - tol <= point.y <= self.y_max + tol
        )


@dataclass(frozen=True, slots=True)
class Anchor:
    """A fixed locator/anchor. ``orientation`` is the array boresight in degrees."""

    id: str
    position: Point3
    orientation: float = 0.0


@dataclass(frozen=True, slots=True)
class AnchorLayout:
    technology: Technology
    anchors: Tuple[Anchor, ...]

    def __post_init__(self) -> None:
        ids = [anchor.id for anchor in self.anchors]
        if len(set(ids)) != len(ids):
            raise GeometryError(f"Anchor ids must be unique: {ids}")
        minimum = 3 if self.technology is Technology.UWB else 2
        if len(self.anchors) < minimum:
            raise GeometryError(
                f"{self.technology.value.upper()} layout needs at least "
                f"{minimum} anchors, got {len(self.anchors)}"
            )

    def __len__(self) -> int:
        return len(self.anchors)

    def positions(self) -> np.ndarray:
        return np.array([a.position.as_array() for a in self.anchors])

    @classmethod
    def corners(
        cls,
        technology: Technology,
        area: Area,
        height: float = 2.0,
    ) -> "AnchorLayout":
        """Four anchors at the area corners, arrays facing the area centre."""

        corners = [
            (area.x_min, area.y_min),
            (area.x_max, area.y_min),
            (area.x_max, area.y_max),
            (area.x_min, area.y_max),
        ]
        center = area.center
        anchors = []
        for index, (x, y) in enumerate(corners, start=1):
            boresight = math.degrees(math.atan2(center.y - y, center.x - x))
            anchors.append(
                Anchor(
                    id=f"A{index}",
                    position=Point3(x, y, height),
                    orientation=boresight,
                )
            )
        return cls(technology=technology, anchors=tuple(anchors))


def wrap_degrees(angle: float) -> float:
    """Map an angle to [-180, 180)."""

    wrapped = (angle + 180.0) % 360.0 - 180.0
    # float modulo can land exactly on 180 for inputs just below -180
    return -180.0 if wrapped >= 180.0 else wrapped


def _check_lengths(name: str, values: Sequence[object], expected: int) -> None:
    if len(values) != expected:
        raise GeometryError(f"{name} needs exactly {expected} values, got {len(values)}")


@dataclass(frozen=True, slots=True)
class BleRecord:
    """One BLE row: 8 per-path RSSI values and 8 AoA values (2 paths x 4 locators)."""

    timestamp: float
    rssi: Tuple[float, ...]
    aoa: Tuple[float, ...]
    truth: Point2
    baseline: Optional[Point2] = None

    def __post_init__(self) -> None:
        _check_lengths("rssi", self.rssi, 8)
        _check_lengths("aoa", self.aoa, 8)
        _check_finite(self.timestamp, *self.rssi, *self.aoa)
        for angle in self.aoa:
            if not -180.0 <= angle < 180.0:
                raise GeometryError(f"AoA {angle} outside [-180, 180)")


@dataclass(frozen=True, slots=True)
class UwbRecord:
    """One UWB row: CIR power, preamble accumulation count and range per anchor."""

    timestamp: float
    cir: Tuple[float, ...]
    psa: Tuple[int, ...]
    dist: Tuple[float, ...]
    truth: Point2
    baseline: Optional[Point2] = None

    def __post_init__(self) -> None:
        _check_lengths("cir", self.cir, 4)
        _check_lengths("psa", self.psa, 4)
        _check_lengths("dist", self.dist, 4)
        _check_finite(self.timestamp, *self.cir, *self.dist)
        if any(d < 0 for d in self.dist):
            raise GeometryError("Distances must be non-negative")
        if any(p < 0 for p in self.psa):
            raise GeometryError("PSA counts must be non-negative")


Record = Union[BleRecord, UwbRecord]


@dataclass(frozen=True, slots=True)
class Session:
    id: str
    scenario: Scenario
    records: Tuple[Record, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        kinds = {type(record) for record in self.records}
        if len(kinds) > 1:
            raise GeometryError(f"Session {self.id} mixes record types")
        stamps = [record.timestamp for record in self.records]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise GeometryError(
                f"Session {self.id} timestamps must be strictly increasing"
            )

    @property
    def technology(self) -> Optional[Technology]:
        if not self.records:
            return None
        return Technology.BLE if isinstance(self.records[0], BleRecord) else Technology.UWB

    def __len__(self) -> int:
        return len(self.records)

    def truths(self) -> list[Point2]:
        return [record.truth for record in self.records]

    def baselines(self) -> list[Point2]:
        missing = [i for i, r in enumerate(self.records) if r.baseline is None]
        if missing:
            raise GeometryError(
                f"Session {self.id} has {len(missing)} records without a baseline"
            )
        return [record.baseline for record in self.records]  # type: ignore[misc]


def euclidean_error(est: Point2, truth: Point2) -> float:
    return math.hypot(est.x - truth.x, est.y - truth.y)


def euclidean_errors(
    estimates: Sequence[Point2], truths: Sequence[Point2]
) -> np.ndarray:
    if len(estimates) != len(truths):
        raise GeometryError("Estimate and truth series differ in length")
    return np.array([euclidean_error(e, t) for e, t in zip(estimates, truths)])


def moving_average(
    series: Sequence[Point2], window: int = DEFAULT_SMOOTHING_WINDOW
) -> list[Point2]:
    """Trailing moving average; the first ``window - 1`` outputs use fewer points."""

    if window < 1:
        raise GeometryError(f"Smoothing window must be >= 1, got {window}")
    if not series:
        return []
    values = np.array([[p.x, p.y] for p in series], dtype=float)
    smoothed = [
        values[max(0, i - window + 1) : i + 1].mean(axis=0)
        for i in range(len(values))
    ]
    return [Point2.from_array(row) for row in smoothed]
