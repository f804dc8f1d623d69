"""Constant-velocity Kalman track over triangulated BLE candidate regions.

Positions fed to the track come from the five-sample AoA consistency filter,
which reports angles from a few records back. Measurement helpers take a
``lag`` in seconds so the filter compares them against ``p - lag * v`` rather
than the current position.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Final, Mapping, Optional, Sequence

import numpy as np

from .aoa import AOA_HISTORY_SIZE, AoaFilterBank, to_global
from .core import AnchorLayout, Area, BleRecord, Point2, Point3
from .triangulation import (
    CLUSTER_RADIUS,
    DEFAULT_HALF_ANGLE,
    CandidateRegion,
    ConicalPathRegion,
    build_cone,
    pairwise_candidates,
)

logger = logging.getLogger(__name__)

DEFAULT_PROCESS_NOISE: Final[float] = 2.5**2
DEFAULT_MEASUREMENT_NOISE: Final[float] = 0.3**2
DEFAULT_GATE: Final[float] = 3.0
DEFAULT_REACQUIRE_AFTER: Final[int] = 3
INITIAL_SPEED_VARIANCE: Final[float] = 1.0


def measurement_matrix(lag: float = 0.0) -> np.ndarray:
    """Maps ``(x, y, vx, vy)`` to the position ``lag`` seconds ago."""

    return np.array([[1.0, 0.0, -lag, 0.0], [0.0, 1.0, 0.0, -lag]])


@dataclass(frozen=True)
class KalmanState:
    """State ``(x, y, vx, vy)`` with covariance ``P``; ``q`` in (m/s^2)^2, ``r`` in m^2."""

    x: np.ndarray
    P: np.ndarray
    q: float = DEFAULT_PROCESS_NOISE
    r: float = DEFAULT_MEASUREMENT_NOISE

    @classmethod
    def at(
        cls,
        position: Point2,
        q: float = DEFAULT_PROCESS_NOISE,
        r: float = DEFAULT_MEASUREMENT_NOISE,
    ) -> "KalmanState":
        x = np.array([position.x, position.y, 0.0, 0.0])
        P = np.diag([r, r, INITIAL_SPEED_VARIANCE, INITIAL_SPEED_VARIANCE])
        return cls(x=x, P=P, q=q, r=r)

    @property
    def position(self) -> Point2:
        return Point2(float(self.x[0]), float(self.x[1]))

    @property
    def velocity(self) -> np.ndarray:
        return self.x[2:].copy()

    def expected(self, lag: float = 0.0) -> Point2:
        return Point2.from_array(measurement_matrix(lag) @ self.x)

    def innovation_covariance(self, lag: float = 0.0) -> np.ndarray:
        H = measurement_matrix(lag)
        return H @ self.P @ H.T + self.r * np.eye(2)


def _symmetric(matrix: np.ndarray) -> np.ndarray:
    return (matrix + matrix.T) / 2.0


def predict(state: KalmanState, dt: float) -> KalmanState:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    block = np.array([[dt**4 / 4.0, dt**3 / 2.0], [dt**3 / 2.0, dt**2]])
    Q = np.zeros((4, 4))
    Q[np.ix_([0, 2], [0, 2])] = block
    Q[np.ix_([1, 3], [1, 3])] = block
    P = F @ state.P @ F.T + state.q * Q
    return replace(state, x=F @ state.x, P=_symmetric(P))


def update(state: KalmanState, meas: Point2, lag: float = 0.0) -> KalmanState:
    H = measurement_matrix(lag)
    z = meas.as_array()
    S = state.innovation_covariance(lag)
    K = state.P @ H.T @ np.linalg.inv(S)
    x = state.x + K @ (z - H @ state.x)
    # Joseph form keeps P symmetric positive definite
    I_KH = np.eye(4) - K @ H
    P = I_KH @ state.P @ I_KH.T + state.r * K @ K.T
    return replace(state, x=x, P=_symmetric(P))


def mahalanobis(state: KalmanState, point: Point2, lag: float = 0.0) -> float:
    innovation = point.as_array() - state.expected(lag).as_array()
    S = state.innovation_covariance(lag)
    return math.sqrt(float(innovation @ np.linalg.solve(S, innovation)))


def select_candidate(
    candidates: Sequence[CandidateRegion],
    state: KalmanState,
    gate: float = DEFAULT_GATE,
    lag: float = 0.0,
) -> Optional[CandidateRegion]:
    """Best gated candidate: most overlaps, then closest to the prediction."""

    expected = state.expected(lag)
    survivors = []
    for candidate in candidates:
        centroid = candidate.centroid.plan()
        if mahalanobis(state, centroid, lag) <= gate:
            distance = math.hypot(centroid.x - expected.x, centroid.y - expected.y)
            survivors.append((-candidate.overlap_count, distance, candidate))
    if not survivors:
        return None
    survivors.sort(key=lambda item: (item[0], item[1]))
    return survivors[0][2]


def gate_and_rank(
    candidates: Sequence[CandidateRegion],
    state: KalmanState,
    gate: float = DEFAULT_GATE,
    lag: float = 0.0,
) -> Point2:
    chosen = select_candidate(candidates, state, gate, lag)
    if chosen is None:
        return state.position
    return chosen.centroid.plan()


def confine(state: KalmanState, area: Area) -> KalmanState:
    """Clamp the position to ``area`` and drop velocity pointing out of it."""

    x = state.x.copy()
    for axis, (low, high) in enumerate(((area.x_min, area.x_max), (area.y_min, area.y_max))):
        if x[axis] < low:
            x[axis] = low
            x[axis + 2] = max(x[axis + 2], 0.0)
        elif x[axis] > high:
            x[axis] = high
            x[axis + 2] = min(x[axis + 2], 0.0)
    if np.array_equal(x, state.x):
        return state
    return replace(state, x=x)


@dataclass(frozen=True, slots=True)
class TrackerConfig:
    q: float = DEFAULT_PROCESS_NOISE
    r: float = DEFAULT_MEASUREMENT_NOISE
    gate: float = DEFAULT_GATE
    half_angle: float = DEFAULT_HALF_ANGLE
    cluster_radius: float = CLUSTER_RADIUS
    reacquire_after: int = DEFAULT_REACQUIRE_AFTER
    lag_compensation: bool = True

    def __post_init__(self) -> None:
        if self.q < 0:
            raise ValueError(f"q must be >= 0, got {self.q}")
        for name in ("r", "gate", "cluster_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.half_angle < 90.0:
            raise ValueError(f"half_angle must be in (0, 90), got {self.half_angle}")
        if self.reacquire_after < 1:
            raise ValueError(f"reacquire_after must be >= 1, got {self.reacquire_after}")


class BleLocaliser:
    """Per-record BLE baseline: AoA filter -> cones -> candidates -> Kalman track.

    After ``reacquire_after`` consecutive records whose candidates all fall
    outside the gate, the track restarts on the most-overlapped candidate.
    """

    def __init__(
        self,
        layout: AnchorLayout,
        area: Area,
        target_height: float = 1.0,
        filter_mode: str = "per_slot",
        config: Optional[TrackerConfig] = None,
    ) -> None:
        self.layout = layout
        self.area = area
        self.target_height = target_height
        self.config = config or TrackerConfig()
        self.filters = AoaFilterBank(filter_mode)
        self.state: Optional[KalmanState] = None
        self.misses = 0
        self._pushed = 0
        self._last_timestamp: Optional[float] = None

    def regions(self, record: BleRecord) -> Mapping[str, Sequence[ConicalPathRegion]]:
        regions = {}
        for index, anchor in enumerate(self.layout.anchors):
            local = (record.aoa[2 * index], record.aoa[2 * index + 1])
            filtered = self.filters.push(anchor.id, local)
            apex = Point3(anchor.position.x, anchor.position.y, self.target_height)
            regions[anchor.id] = [
                build_cone(
                    apex,
                    to_global(anchor, angle),
                    half_angle=self.config.half_angle,
                    max_range=self.area.diagonal,
                )
                for angle in filtered
            ]
        self._pushed += 1
        return regions

    def filter_lag(self, dt: float) -> float:
        """Age in seconds of the angle the consistency filter forwards."""

        if not self.config.lag_compensation:
            return 0.0
        filled = min(self._pushed, AOA_HISTORY_SIZE)
        return (filled - 1) / 2.0 * dt

    def _start(self, candidate: CandidateRegion) -> None:
        self.state = KalmanState.at(
            candidate.centroid.plan(), q=self.config.q, r=self.config.r
        )
        self.misses = 0

    def step(self, record: BleRecord) -> Point2:
        candidates = pairwise_candidates(
            self.regions(record), cluster_radius=self.config.cluster_radius
        )
        previous, self._last_timestamp = self._last_timestamp, record.timestamp

        if self.state is None:
            if not candidates:
                logger.debug("No candidates at t=%.3f before track start", record.timestamp)
                return self.area.center
            self._start(candidates[0])
            assert self.state is not None
            return self.state.position

        assert previous is not None
        dt = record.timestamp - previous
        lag = self.filter_lag(dt)
        self.state = confine(predict(self.state, dt), self.area)
        chosen = select_candidate(candidates, self.state, self.config.gate, lag)
        if chosen is not None:
            self.state = confine(update(self.state, chosen.centroid.plan(), lag), self.area)
            self.misses = 0
            return self.state.position

        self.misses += 1
        logger.debug("All candidates gated at t=%.3f (%d in a row)", record.timestamp, self.misses)
        if candidates and self.misses >= self.config.reacquire_after:
            logger.debug("Re-acquiring track at t=%.3f", record.timestamp)
            self._start(candidates[0])
        return self.state.position
