"""UWB single-sided two-way ranging and least-squares multilateration."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Final, Sequence

import numpy as np
from scipy import constants

from .core import Point2, Point3

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT: Final[float] = constants.speed_of_light
DEFAULT_REPLY_DELAY: Final[float] = 1e-3
MAX_ITERATIONS: Final[int] = 50
STEP_TOLERANCE: Final[float] = 1e-6


class RangingError(RuntimeError):
    """Raised when timestamps describe a negative time of flight."""


@dataclass(frozen=True, slots=True)
class TwrExchange:
    """Poll/response timestamps; target clock for the first pair, anchor clock for the second."""

    t_poll_tx: float
    t_resp_rx: float
    t_poll_rx: float
    t_resp_tx: float

    def __post_init__(self) -> None:
        if not self.t_resp_rx > self.t_poll_tx:
            raise ValueError("Response must be received after the poll is sent")
        if not self.t_resp_tx > self.t_poll_rx:
            raise ValueError("Response must be sent after the poll is received")


def twr_distance(x: TwrExchange) -> float:
    round_trip = x.t_resp_rx - x.t_poll_tx
    reply = x.t_resp_tx - x.t_poll_rx
    tof = (round_trip - reply) / 2.0
    if tof < 0:
        raise RangingError(
            f"Negative time of flight ({tof:.3e} s): clocks are inconsistent"
        )
    return SPEED_OF_LIGHT * tof


def simulate_exchange(
    distance: float,
    reply_delay: float = DEFAULT_REPLY_DELAY,
    target_offset: float = 0.0,
    anchor_offset: float = 0.0,
) -> TwrExchange:
    """Timestamps of an ideal-clock exchange over ``distance`` metres."""

    tof = distance / SPEED_OF_LIGHT
    return TwrExchange(
        t_poll_tx=target_offset,
        t_resp_rx=target_offset + 2.0 * tof + reply_delay,
        t_poll_rx=anchor_offset + tof,
        t_resp_tx=anchor_offset + tof + reply_delay,
    )


@dataclass(frozen=True, slots=True)
class MultilaterationResult:
    position: Point2
    converged: bool
    iterations: int
    residual_norm: float


def residuals(
    anchors: np.ndarray, dists: np.ndarray, xy: np.ndarray, target_height: float
) -> np.ndarray:
    point = np.array([xy[0], xy[1], target_height])
    return np.linalg.norm(anchors - point, axis=1) - dists


def multilaterate(
    anchors: Sequence[Point3],
    dists: Sequence[float],
    target_height: float = 1.0,
) -> MultilaterationResult:
    """Gauss-Newton on ``|p - a_i| - d_i`` with ``p`` held at ``target_height``."""

    a = np.array([anchor.as_array() for anchor in anchors])
    d = np.asarray(dists, dtype=float)
    if len(a) != len(d):
        raise ValueError("Need one distance per anchor")
    if len(a) < 3:
        raise ValueError("Need at least 3 anchors")
    plan = a[:, :2] - a[:, :2].mean(axis=0)
    if np.linalg.matrix_rank(plan, tol=1e-9) < 2:
        raise ValueError("Anchors are collinear in plan view")

    xy = a[:, :2].mean(axis=0)
    converged = False
    iteration = 0
    for iteration in range(1, MAX_ITERATIONS + 1):
        point = np.array([xy[0], xy[1], target_height])
        offsets = point - a
        ranges = np.maximum(np.linalg.norm(offsets, axis=1), 1e-12)
        r = ranges - d
        jacobian = offsets[:, :2] / ranges[:, None]
        step, *_ = np.linalg.lstsq(jacobian, -r, rcond=None)
        xy = xy + step
        if math.hypot(step[0], step[1]) < STEP_TOLERANCE:
            converged = True
            break
    if not converged:
        logger.debug("Multilateration did not converge in %d iterations", iteration)
    norm = float(np.linalg.norm(residuals(a, d, xy, target_height)))
    return MultilaterationResult(
        position=Point2(float(xy[0]), float(xy[1])),
        converged=converged,
        iterations=iteration,
        residual_norm=norm,
    )
