"""MUSIC angle-of-arrival estimation for the four-element circular locator array."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Deque, Dict, Final, Tuple

import numpy as np
from scipy import constants

from .core import Anchor, wrap_degrees

logger = logging.getLogger(__name__)

BLE_CARRIER_HZ: Final[float] = 2.402e9
BAND_CENTRE_HZ: Final[float] = 2.44e9
DEFAULT_ELEMENT_SPACING: Final[float] = 0.45
DEFAULT_GRID_STEP: Final[float] = 1.0
DEFAULT_NUM_SOURCES: Final[int] = 2
AOA_HISTORY_SIZE: Final[int] = 5


class AoaError(RuntimeError):
    """Raised when no usable angle can be read from a spectrum."""


@dataclass(frozen=True, slots=True)
class ArrayGeometry:
    """Uniform circular array; element ``m`` sits at angle ``360 * m / n`` degrees.

    Angles are in the array's own frame (0 degrees = boresight).
    """

    n_elements: int
    radius: float
    wavelength: float

    @classmethod
    def circular(
        cls,
        n_elements: int = 4,
        spacing: float = DEFAULT_ELEMENT_SPACING,
        spacing_mode: str = "chord",
        carrier_hz: float = BLE_CARRIER_HZ,
    ) -> "ArrayGeometry":
        """Build from adjacent-element spacing given in band-centre wavelengths.

        ``chord`` reads the spacing as the straight-line distance between
        neighbours (radius ``d / (2 sin(pi / n))``, i.e. ``0.45 lambda / sqrt(2)``
        for four elements); ``arc`` reads it along the circle.
        """

        design_wavelength = constants.speed_of_light / BAND_CENTRE_HZ
        d = spacing * design_wavelength
        if spacing_mode == "chord":
            radius = d / (2.0 * math.sin(math.pi / n_elements))
        elif spacing_mode == "arc":
            radius = d * n_elements / (2.0 * math.pi)
        else:
            raise ValueError(f"Unknown spacing mode: {spacing_mode}")
        return cls(
            n_elements=n_elements,
            radius=radius,
            wavelength=constants.speed_of_light / carrier_hz,
        )

    def element_angles(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_elements) / self.n_elements

    def steering(self, azimuths_deg: np.ndarray) -> np.ndarray:
        """Steering vectors as columns, shape (n_elements, len(azimuths))."""

        theta = np.deg2rad(np.atleast_1d(np.asarray(azimuths_deg, dtype=float)))
        k_r = 2.0 * np.pi * self.radius / self.wavelength
        phase = k_r * np.cos(theta[None, :] - self.element_angles()[:, None])
        return np.exp(1j * phase)


@dataclass(frozen=True)
class IqSnapshot:
    """Per-antenna complex samples, shape (n_antennas, n_samples)."""

    samples: np.ndarray
    carrier_hz: float = BLE_CARRIER_HZ

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=complex)
        if samples.ndim != 2:
            raise ValueError("Snapshot samples must be a 2-D (antenna, sample) array")
        object.__setattr__(self, "samples", samples)

    @property
    def n_antennas(self) -> int:
        return int(self.samples.shape[0])

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[1])


@dataclass(frozen=True)
class AngularSpectrum:
    grid: np.ndarray
    values: np.ndarray
    flat: bool = False

    def argmax(self) -> float:
        return float(self.grid[int(np.argmax(self.values))])


def covariance(snapshot: IqSnapshot) -> np.ndarray:
    x = snapshot.samples
    if x.shape[1] < 2:
        raise ValueError("Covariance needs at least 2 samples per antenna")
    r = x @ x.conj().T / x.shape[1]
    # exact Hermitian symmetry, independent of BLAS rounding
    return (r + r.conj().T) / 2.0


def azimuth_grid(step: float = DEFAULT_GRID_STEP) -> np.ndarray:
    count = int(round(360.0 / step))
    return -180.0 + step * np.arange(count)


@lru_cache(maxsize=16)
def _grid_steering(geometry: ArrayGeometry, step: float) -> Tuple[np.ndarray, np.ndarray]:
    grid = azimuth_grid(step)
    return grid, geometry.steering(grid)


def music_spectrum(
    r: np.ndarray,
    geometry: ArrayGeometry,
    num_sources: int = DEFAULT_NUM_SOURCES,
    grid_step: float = DEFAULT_GRID_STEP,
) -> AngularSpectrum:
    if num_sources not in (1, 2):
        raise ValueError(f"num_sources must be 1 or 2, got {num_sources}")
    grid, steering = _grid_steering(geometry, float(grid_step))

    eigenvalues, eigenvectors = np.linalg.eigh(r)
    spread = eigenvalues[-1] - eigenvalues[0]
    if spread <= 1e-12 * max(abs(eigenvalues[-1]), 1e-300):
        return AngularSpectrum(grid=grid, values=np.ones_like(grid), flat=True)

    # eigh sorts ascending: the noise subspace is the leading columns
    noise = eigenvectors[:, : geometry.n_elements - num_sources]
    projection = noise.conj().T @ steering
    denominator = np.sum(np.abs(projection) ** 2, axis=0)
    values = 1.0 / np.maximum(denominator, np.finfo(float).tiny)
    return AngularSpectrum(grid=grid, values=values / values.max())


def _local_maxima(values: np.ndarray) -> list[int]:
    """Indices of circular local maxima; a plateau reports its first index."""

    n = len(values)
    peaks: list[int] = []
    for i in range(n):
        if not values[i] > values[i - 1]:
            continue
        j = i
        while values[(j + 1) % n] == values[i] and (j + 1) % n != i:
            j += 1
        if values[(j + 1) % n] < values[i]:
            peaks.append(i)
    return peaks


def extract_paths(spectrum: AngularSpectrum, k: int = 2) -> Tuple[float, ...]:
    if spectrum.flat:
        raise AoaError("Flat spectrum has no dominant path")
    values = spectrum.values
    peaks = _local_maxima(values)
    if not peaks:
        raise AoaError("Spectrum has no local maximum")
    peaks.sort(key=lambda i: (-values[i], i))
    chosen = peaks[:k]
    while len(chosen) < k:
        chosen.append(peaks[0])
    return tuple(float(spectrum.grid[i]) for i in chosen)


def circular_mean(angles: np.ndarray) -> float:
    rad = np.deg2rad(angles)
    return math.degrees(math.atan2(float(np.sin(rad).mean()), float(np.cos(rad).mean())))


def angular_distance(a: np.ndarray, b: float) -> np.ndarray:
    return np.abs((np.asarray(a) - b + 180.0) % 360.0 - 180.0)


@dataclass
class AoaHistory:
    """The last five AoA estimates of one (anchor, path slot) stream."""

    values: Deque[float] = field(
        default_factory=lambda: deque(maxlen=AOA_HISTORY_SIZE)
    )

    @property
    def capacity(self) -> int:
        return AOA_HISTORY_SIZE

    def __len__(self) -> int:
        return len(self.values)


def filter_aoa(history: AoaHistory, new: float) -> Tuple[float, float]:
    """Push ``new`` and return the two buffered angles closest to the circular mean."""

    history.values.append(float(new))
    buffer = np.array(history.values)
    if len(buffer) == 1:
        return float(buffer[0]), float(buffer[0])
    distances = angular_distance(buffer, circular_mean(buffer))
    order = np.argsort(distances, kind="stable")
    return float(buffer[order[0]]), float(buffer[order[1]])


class AoaEstimator:
    """Snapshot -> two most likely azimuths in the array frame."""

    def __init__(
        self,
        geometry: ArrayGeometry | None = None,
        grid_step: float = DEFAULT_GRID_STEP,
        num_sources: int = DEFAULT_NUM_SOURCES,
    ) -> None:
        self.geometry = geometry or ArrayGeometry.circular()
        self.grid_step = grid_step
        self.num_sources = num_sources

    def spectrum(self, snapshot: IqSnapshot) -> AngularSpectrum:
        return music_spectrum(
            covariance(snapshot),
            self.geometry,
            num_sources=self.num_sources,
            grid_step=self.grid_step,
        )

    def paths(self, snapshot: IqSnapshot) -> Tuple[float, float]:
        first, second = extract_paths(self.spectrum(snapshot), k=2)
        return first, second


def to_global(anchor: Anchor, local_azimuth: float) -> float:
    return wrap_degrees(local_azimuth + anchor.orientation)


def to_local(anchor: Anchor, global_azimuth: float) -> float:
    return wrap_degrees(global_azimuth - anchor.orientation)


class AoaFilterBank:
    """Five-sample consistency filter for every locator.

    ``per_slot`` keeps one history per (anchor, path slot) and forwards the
    closest-to-mean angle of each slot; ``pooled`` keeps one history per anchor
    fed with the strongest path and forwards both closest-to-mean angles.
    """

    def __init__(self, mode: str = "per_slot") -> None:
        if mode not in ("per_slot", "pooled"):
            raise ValueError(f"Unknown AoA filter mode: {mode}")
        self.mode = mode
        self._histories: Dict[Tuple[str, int], AoaHistory] = {}

    def _history(self, anchor_id: str, slot: int) -> AoaHistory:
        key = (anchor_id, slot)
        if key not in self._histories:
            self._histories[key] = AoaHistory()
        return self._histories[key]

    def push(self, anchor_id: str, paths: Tuple[float, float]) -> Tuple[float, float]:
        if self.mode == "pooled":
            return filter_aoa(self._history(anchor_id, 0), paths[0])
        first = filter_aoa(self._history(anchor_id, 0), paths[0])[0]
        second = filter_aoa(self._history(anchor_id, 1), paths[1])[0]
        return first, second
