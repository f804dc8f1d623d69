"""Synthetic BLE-AoA and UWB testbeds.

Every generator is a pure function of its inputs and a seed (an ``int`` or a
``numpy.random.SeedSequence``), so a dataset is reproducible from the root seed
recorded in its manifest.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Final, Optional, Sequence, Union

import numpy as np

from . import ranging
from .aoa import (
    BLE_CARRIER_HZ,
    AoaError,
    AoaEstimator,
    ArrayGeometry,
    IqSnapshot,
    to_local,
)
from .core import (
    Anchor,
    AnchorLayout,
    Area,
    BleRecord,
    Point2,
    Scenario,
    Session,
    Technology,
    UwbRecord,
)
from .tracking import BleLocaliser, TrackerConfig

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.SeedSequence]

SAMPLE_RATE_HZ: Final[float] = 10.0
BLE_SESSION_SECONDS: Final[float] = 48.0
UWB_SESSION_SECONDS: Final[float] = 90.0
DEFAULT_TARGET_HEIGHT: Final[float] = 1.0
MAX_SPEED: Final[float] = 2.0

WALKING_SPEED: Final[float] = 1.2
TROLLEY_SPEED: Final[float] = 0.8

RSSI_AT_1M: Final[float] = -40.0
PATH_LOSS_EXPONENT: Final[float] = 2.0

CIR_AT_1M: Final[float] = 17.0
CIR_NLOS_LOSS: Final[float] = 8.0
PSA_NOMINAL: Final[int] = 1024

CTE_SYMBOLS: Final[int] = 160
CTE_SYNC_SYMBOLS: Final[int] = 8


__all__ = [
    "IqSnapshot",
    "NoiseProfile",
    "Trajectory",
    "gen_trajectory",
    "synth_ble_snapshot",
    "synth_ble_record",
    "synth_uwb_record",
    "gen_dataset",
    "path_loss_rssi",
    "session_seeds",
]


@dataclass(frozen=True, slots=True)
class NoiseProfile:
    rssi_sigma: float = 2.0
    aoa_sigma: float = 3.0
    multipath_ghost_prob: float = 0.3
    ghost_offset_sigma: float = 25.0
    ghost_gain: float = 0.7
    iq_noise_sigma: float = 0.05
    ranging_sigma: float = 0.05
    nlos_bias_max: float = 1.0
    nlos_prob: float = 0.35
    trolley_nlos_scale: float = 0.2
    cir_sigma: float = 1.0
    psa_sigma: float = 8.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        sigmas = {
            "rssi_sigma": self.rssi_sigma,
            "aoa_sigma": self.aoa_sigma,
            "ghost_offset_sigma": self.ghost_offset_sigma,
            "ghost_gain": self.ghost_gain,
            "iq_noise_sigma": self.iq_noise_sigma,
            "ranging_sigma": self.ranging_sigma,
            "nlos_bias_max": self.nlos_bias_max,
            "cir_sigma": self.cir_sigma,
            "psa_sigma": self.psa_sigma,
        }
        for name, value in sigmas.items():
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")
        for name, value in {
            "multipath_ghost_prob": self.multipath_ghost_prob,
            "nlos_prob": self.nlos_prob,
            "trolley_nlos_scale": self.trolley_nlos_scale,
        }.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {value}")

    @classmethod
    def noiseless(cls, rng_seed: int = 0) -> "NoiseProfile":
        return cls(
            rssi_sigma=0.0,
            aoa_sigma=0.0,
            multipath_ghost_prob=0.0,
            ghost_offset_sigma=0.0,
            iq_noise_sigma=0.0,
            ranging_sigma=0.0,
            nlos_bias_max=0.0,
            nlos_prob=0.0,
            cir_sigma=0.0,
            psa_sigma=0.0,
            rng_seed=rng_seed,
        )

    def nlos_probability(self, scenario: Scenario) -> float:
        if scenario is Scenario.TROLLEY:
            return self.nlos_prob * self.trolley_nlos_scale
        return self.nlos_prob


@dataclass(frozen=True)
class Trajectory:
    scenario: Scenario
    times: np.ndarray
    positions: np.ndarray
    sample_rate: float

    def __len__(self) -> int:
        return len(self.times)

    @property
    def points(self) -> list[Point2]:
        return [Point2.from_array(row) for row in self.positions]

    def speeds(self) -> np.ndarray:
        steps = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        return steps * self.sample_rate


def _inner_bounds(area: Area, margin: float) -> tuple[np.ndarray, np.ndarray]:
    margin = min(margin, 0.25 * min(area.width, area.height))
    low = np.array([area.x_min + margin, area.y_min + margin])
    high = np.array([area.x_max - margin, area.y_max - margin])
    return low, high


def _trolley_loop(
    rng: np.random.Generator, n: int, dt: float, low: np.ndarray, high: np.ndarray
) -> np.ndarray:
    center = (low + high) / 2.0
    a, b = 0.4 * (high - low)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    direction = 1.0 if rng.random() < 0.5 else -1.0
    points = np.empty((n, 2))
    for i in range(n):
        points[i] = center + np.array([a * math.cos(phi), b * math.sin(phi)])
        local_radius = math.hypot(a * math.sin(phi), b * math.cos(phi))
        phi += direction * TROLLEY_SPEED * dt / max(local_radius, 1e-6)
    jitter = np.clip(rng.normal(0.0, 0.004, size=(n, 2)), -0.008, 0.008)
    return np.clip(points + jitter, low, high)


def _walking_path(
    rng: np.random.Generator, n: int, dt: float, low: np.ndarray, high: np.ndarray
) -> np.ndarray:
    center = (low + high) / 2.0
    position = rng.uniform(low, high)
    heading = rng.uniform(-np.pi, np.pi)
    points = np.empty((n, 2))
    for i in range(n):
        points[i] = position
        heading += rng.normal(0.0, 0.25)
        speed = float(np.clip(rng.normal(WALKING_SPEED, 0.1), 0.9, 1.5))
        step = speed * dt * np.array([math.cos(heading), math.sin(heading)])
        candidate = position + step
        if np.any(candidate < low) or np.any(candidate > high):
            to_center = center - position
            heading = math.atan2(to_center[1], to_center[0]) + rng.normal(0.0, 0.3)
            step = speed * dt * np.array([math.cos(heading), math.sin(heading)])
            candidate = position + step
        position = np.clip(candidate, low, high)
    sway = np.clip(rng.normal(0.0, 0.012, size=(n, 2)), -0.015, 0.015)
    return points + sway


def gen_trajectory(
    scenario: Scenario,
    duration: float,
    area: Area,
    seed: Seed,
    sample_rate: float = SAMPLE_RATE_HZ,
    margin: float = 0.4,
) -> Trajectory:
    """Sample a Walking (jittery random walk) or Trolley (smooth loop) path."""

    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    dt = 1.0 / sample_rate
    low, high = _inner_bounds(area, margin)
    if scenario is Scenario.TROLLEY:
        positions = _trolley_loop(rng, n, dt, low, high)
    else:
        positions = _walking_path(rng, n, dt, low, high)
    return Trajectory(
        scenario=scenario,
        times=np.arange(n) * dt,
        positions=positions,
        sample_rate=sample_rate,
    )


def _cte_antenna_schedule(n_antennas: int = 4) -> np.ndarray:
    """Antenna index of every retained CTE symbol after the sync preamble."""

    payload = CTE_SYMBOLS - CTE_SYNC_SYMBOLS
    kept = np.arange(0, payload, 2)
    return (kept // 2) % n_antennas


def _azimuth_from(anchor: Anchor, target: Point2) -> float:
    dx = target.x - anchor.position.x
    dy = target.y - anchor.position.y
    return math.degrees(math.atan2(dy, dx))


def synth_ble_snapshot(
    truth: Point2,
    anchor: Anchor,
    profile: NoiseProfile,
    rng: np.random.Generator,
    geometry: Optional[ArrayGeometry] = None,
    amplitude: float = 1.0,
) -> IqSnapshot:
    """Switched-antenna CTE capture of a constant tone from ``truth``."""

    geometry = geometry or ArrayGeometry.circular()
    azimuth = to_local(anchor, _azimuth_from(anchor, truth))
    azimuth += rng.normal(0.0, profile.aoa_sigma) if profile.aoa_sigma else 0.0
    phase0 = rng.uniform(0.0, 2.0 * np.pi)
    wavefront = amplitude * np.exp(1j * phase0) * geometry.steering(azimuth)[:, 0]

    if rng.random() < profile.multipath_ghost_prob:
        ghost_azimuth = azimuth + rng.normal(0.0, profile.ghost_offset_sigma)
        ghost_phase = rng.uniform(0.0, 2.0 * np.pi)
        wavefront = wavefront + (
            profile.ghost_gain
            * amplitude
            * np.exp(1j * ghost_phase)
            * geometry.steering(ghost_azimuth)[:, 0]
        )

    schedule = _cte_antenna_schedule(geometry.n_elements)
    per_antenna = len(schedule) // geometry.n_elements
    samples = np.empty((geometry.n_elements, per_antenna), dtype=complex)
    scale = profile.iq_noise_sigma / math.sqrt(2.0)
    noise = scale * (
        rng.standard_normal(len(schedule)) + 1j * rng.standard_normal(len(schedule))
    )
    for m in range(geometry.n_elements):
        samples[m] = wavefront[m] + noise[schedule == m]
    return IqSnapshot(samples=samples, carrier_hz=BLE_CARRIER_HZ)


def path_loss_rssi(distance: float) -> float:
    """Log-distance path loss: -40 dBm at 1 m, exponent 2."""

    return RSSI_AT_1M - 10.0 * PATH_LOSS_EXPONENT * math.log10(max(distance, 1e-3))


def _distance3(anchor: Anchor, truth: Point2, target_height: float) -> float:
    p = anchor.position
    return math.sqrt(
        (p.x - truth.x) ** 2 + (p.y - truth.y) ** 2 + (p.z - target_height) ** 2
    )


def synth_ble_record(
    truth: Point2,
    layout: AnchorLayout,
    profile: NoiseProfile,
    aoa_estimator: AoaEstimator,
    rng: np.random.Generator,
    timestamp: float = 0.0,
    target_height: float = DEFAULT_TARGET_HEIGHT,
) -> Optional[BleRecord]:
    """RSSI and MUSIC AoA for every locator; ``None`` when a spectrum is unusable."""

    if layout.technology is not Technology.BLE or len(layout) != 4:
        raise ValueError("BLE records need a BLE layout with 4 locators")
    rssi: list[float] = []
    aoa: list[float] = []
    failed = False
    for anchor in layout.anchors:
        mean = path_loss_rssi(_distance3(anchor, truth, target_height))
        rssi.extend(mean + rng.normal(0.0, profile.rssi_sigma) for _ in range(2))
        snapshot = synth_ble_snapshot(
            truth, anchor, profile, rng, geometry=aoa_estimator.geometry
        )
        try:
            aoa.extend(aoa_estimator.paths(snapshot))
        except AoaError as exc:
            logger.debug("Dropping record at t=%.3f (%s): %s", timestamp, anchor.id, exc)
            failed = True
    if failed:
        return None
    return BleRecord(timestamp=timestamp, rssi=tuple(rssi), aoa=tuple(aoa), truth=truth)


def synth_uwb_record(
    truth: Point2,
    layout: AnchorLayout,
    profile: NoiseProfile,
    rng: np.random.Generator,
    timestamp: float = 0.0,
    target_height: float = DEFAULT_TARGET_HEIGHT,
    nlos_prob: Optional[float] = None,
    force_nlos: Optional[bool] = None,
) -> UwbRecord:
    """Single-sided TWR ranges plus CIR/PSA quality indicators per anchor.

    NLOS links range long and report lower CIR power and fewer accumulated
    preamble symbols, all in proportion to a per-link blockage severity.
    """

    if layout.technology is not Technology.UWB or len(layout) != 4:
        raise ValueError("UWB records need a UWB layout with 4 anchors")
    probability = profile.nlos_prob if nlos_prob is None else nlos_prob
    cir: list[float] = []
    psa: list[int] = []
    dist: list[float] = []
    for anchor in layout.anchors:
        geometric = _distance3(anchor, truth, target_height)
        draw = rng.random()
        nlos = draw < probability if force_nlos is None else force_nlos
        noise = rng.normal(0.0, profile.ranging_sigma) if profile.ranging_sigma else 0.0
        # blockage severity sets the excess path and both quality indicators
        severity = rng.uniform() if nlos else 0.0
        bias = severity * profile.nlos_bias_max
        measured = max(geometric + noise + bias, 0.0)
        exchange = ranging.simulate_exchange(measured)
        dist.append(ranging.twr_distance(exchange))

        power = CIR_AT_1M - 20.0 * math.log10(geometric)
        if nlos:
            power -= CIR_NLOS_LOSS * (0.5 + severity)
        power += rng.normal(0.0, profile.cir_sigma) if profile.cir_sigma else 0.0
        cir.append(power)

        accumulated = PSA_NOMINAL * ((0.9 - 0.4 * severity) if nlos else 1.0)
        accumulated += rng.normal(0.0, profile.psa_sigma) if profile.psa_sigma else 0.0
        psa.append(max(int(round(accumulated)), 0))
    return UwbRecord(
        timestamp=timestamp,
        cir=tuple(cir),
        psa=tuple(psa),
        dist=tuple(dist),
        truth=truth,
    )


def _uwb_truth(
    point: Point2,
    layout: AnchorLayout,
    profile: NoiseProfile,
    rng: np.random.Generator,
    target_height: float,
) -> Point2:
    """Position as the UWB system would report it (LOS ranging only)."""

    uwb_layout = AnchorLayout(technology=Technology.UWB, anchors=layout.anchors)
    record = synth_uwb_record(
        point, uwb_layout, profile, rng, target_height=target_height, nlos_prob=0.0
    )
    return ranging.multilaterate(
        [a.position for a in uwb_layout.anchors], record.dist, target_height
    ).position


def _ble_session(
    session_id: str,
    trajectory: Trajectory,
    layout: AnchorLayout,
    area: Area,
    profile: NoiseProfile,
    rng: np.random.Generator,
    target_height: float,
    ble_truth: str,
    aoa_filter_mode: str,
    tracker_config: TrackerConfig,
) -> Session:
    estimator = AoaEstimator()
    localiser = BleLocaliser(
        layout,
        area,
        target_height=target_height,
        filter_mode=aoa_filter_mode,
        config=tracker_config,
    )
    records: list[BleRecord] = []
    for t, point in zip(trajectory.times, trajectory.points):
        record = synth_ble_record(
            point, layout, profile, estimator, rng, float(t), target_height
        )
        if record is None:
            continue
        if ble_truth == "uwb":
            record = replace(
                record, truth=_uwb_truth(point, layout, profile, rng, target_height)
            )
        baseline = localiser.step(record)
        records.append(replace(record, baseline=baseline))
    return Session(id=session_id, scenario=trajectory.scenario, records=tuple(records))


def _uwb_session(
    session_id: str,
    trajectory: Trajectory,
    layout: AnchorLayout,
    profile: NoiseProfile,
    rng: np.random.Generator,
    target_height: float,
) -> Session:
    anchors = [a.position for a in layout.anchors]
    probability = profile.nlos_probability(trajectory.scenario)
    records: list[UwbRecord] = []
    for t, point in zip(trajectory.times, trajectory.points):
        record = synth_uwb_record(
            point,
            layout,
            profile,
            rng,
            float(t),
            target_height,
            nlos_prob=probability,
        )
        solution = ranging.multilaterate(anchors, record.dist, target_height)
        records.append(replace(record, baseline=solution.position))
    return Session(id=session_id, scenario=trajectory.scenario, records=tuple(records))


def session_seeds(root_seed: int, count: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(root_seed).spawn(count)


def gen_dataset(
    tech: Technology,
    scenario_list: Sequence[Scenario],
    sessions_per_scenario: int,
    profile: NoiseProfile,
    layout: AnchorLayout,
    area: Area,
    session_duration: Optional[float] = None,
    target_height: float = DEFAULT_TARGET_HEIGHT,
    ble_truth: str = "trajectory",
    aoa_filter_mode: str = "per_slot",
    tracker_config: Optional[TrackerConfig] = None,
) -> list[Session]:
    """Sessions named ``<scenario>-<n>`` with baselines filled in."""

    try:
        tech = Technology(tech)
    except ValueError:
        raise ValueError(f"Unknown technology: {tech!r}") from None
    if sessions_per_scenario < 2:
        raise ValueError("At least 2 sessions per scenario are needed for LOSO")
    if layout.technology is not tech:
        raise ValueError(
            f"Layout is {layout.technology.value}, dataset is {tech.value}"
        )
    if ble_truth not in ("trajectory", "uwb"):
        raise ValueError(f"Unknown BLE truth source: {ble_truth}")
    duration = session_duration or (
        BLE_SESSION_SECONDS if tech is Technology.BLE else UWB_SESSION_SECONDS
    )
    seeds = session_seeds(profile.rng_seed, len(scenario_list) * sessions_per_scenario)
    sessions: list[Session] = []
    for s_index, scenario in enumerate(scenario_list):
        for k in range(sessions_per_scenario):
            seed = seeds[s_index * sessions_per_scenario + k]
            trajectory_seed, measurement_seed = seed.spawn(2)
            trajectory = gen_trajectory(scenario, duration, area, trajectory_seed)
            rng = np.random.default_rng(measurement_seed)
            session_id = f"{scenario.value}-{k + 1}"
            logger.debug("Simulating %s session %s", tech.value, session_id)
            if tech is Technology.BLE:
                session = _ble_session(
                    session_id,
                    trajectory,
                    layout,
                    area,
                    profile,
                    rng,
                    target_height,
                    ble_truth,
                    aoa_filter_mode,
                    tracker_config or TrackerConfig(),
                )
            else:
                session = _uwb_session(
                    session_id, trajectory, layout, profile, rng, target_height
                )
            sessions.append(session)
    logger.info("Generated %d %s sessions", len(sessions), tech.value)
    return sessions


