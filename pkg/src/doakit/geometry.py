"""Array geometry, far-field steering delays, and the alias-safe pair set.

Conventions used throughout the toolkit:

* Microphone index ``i`` is the 0-based position order of ``ArrayGeometry.mics``;
  every downstream structure (pairs, delays, channels of a recording) follows it.
* A direction's unit propagation vector is
  ``u = (cos el * cos az, cos el * sin az, sin el)``.
* The far-field steering delay of mic ``i`` for direction ``u`` is
  ``tau_i = -(m_i . u) / v``.  Only delay *differences* are physical; the raw
  form (no reference mic, no centroid) is used consistently by both estimators.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyPairSet

SPEED_OF_SOUND = 343.0  # m/s, dry air at 20 C

_MIN_MIC_SEPARATION = 1e-6  # m


@dataclass(frozen=True)
class Direction:
    """Arrival direction in degrees: azimuth in (-180, 180], elevation in [-90, 90]."""

    azimuth: float
    elevation: float

    def __post_init__(self):
        if not (-180.0 < self.azimuth <= 180.0):
            raise ValueError(f"azimuth {self.azimuth} outside (-180, 180]")
        if not (-90.0 <= self.elevation <= 90.0):
            raise ValueError(f"elevation {self.elevation} outside [-90, 90]")


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """Microphone positions in meters, array-local Cartesian frame."""

    mics: np.ndarray  # (num_mics, 3)
    name: str = "array"
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        mics = np.array(self.mics, dtype=float)
        if mics.ndim != 2 or mics.shape[1] != 3:
            raise ValueError(f"mics must be (n, 3), got shape {mics.shape}")
        if mics.shape[0] < 2:
            raise ValueError("at least 2 microphones required")
        if not np.all(np.isfinite(mics)):
            raise ValueError("microphone positions must be finite")
        if self.speed_of_sound <= 0:
            raise ValueError("speed_of_sound must be positive")
        diffs = mics[:, None, :] - mics[None, :, :]
        dists = np.linalg.norm(diffs, axis=-1)
        iu = np.triu_indices(mics.shape[0], k=1)
        if dists[iu].min() < _MIN_MIC_SEPARATION:
            raise ValueError(f"two microphones closer than {_MIN_MIC_SEPARATION} m")
        mics.setflags(write=False)
        object.__setattr__(self, "mics", mics)

    @property
    def num_mics(self) -> int:
        return self.mics.shape[0]

    def pair_distance(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.mics[i] - self.mics[j]))

    def is_planar(self, tol: float = 1e-9) -> bool:
        """True when all mics share one z coordinate (elevation is degenerate)."""
        z = self.mics[:, 2]
        return bool(np.ptp(z) <= tol)


@dataclass(frozen=True)
class PairSet:
    """Microphone pairs (i < j) closer than the spatial-alias bound v/f_max."""

    pairs: tuple[tuple[int, int], ...]
    f_max: float
    speed_of_sound: float


def unit_vector(direction: Direction) -> np.ndarray:
    """Unit propagation vector of a direction; norm 1 by construction."""
    az = math.radians(direction.azimuth)
    el = math.radians(direction.elevation)
    return np.array(
        [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
    )


def unit_vectors(directions: Sequence[Direction]) -> np.ndarray:
    """Stacked unit vectors, shape (len(directions), 3)."""
    az = np.radians([d.azimuth for d in directions])
    el = np.radians([d.elevation for d in directions])
    return np.stack(
        [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=1
    )


def steering_delays(
    geom: ArrayGeometry, direction: Direction, speed_of_sound: float | None = None
) -> np.ndarray:
    """Per-mic far-field delays tau_i = -(m_i . u) / v in seconds.

    Absolute values depend on the (arbitrary) coordinate origin; only the
    differences tau_i - tau_j are physical.
    """
    v = geom.speed_of_sound if speed_of_sound is None else speed_of_sound
    if v <= 0:
        raise ValueError("speed of sound must be positive")
    return -(geom.mics @ unit_vector(direction)) / v


def steering_matrix(
    geom: ArrayGeometry,
    directions: Sequence[Direction],
    speed_of_sound: float | None = None,
) -> np.ndarray:
    """Steering delays for a whole grid at once, shape (len(directions), num_mics)."""
    v = geom.speed_of_sound if speed_of_sound is None else speed_of_sound
    if v <= 0:
        raise ValueError("speed of sound must be positive")
    return -(unit_vectors(directions) @ geom.mics.T) / v


def steering_vector(delays: np.ndarray, omega: float) -> np.ndarray:
    """Complex phasors exp(-j omega tau_i); every element has magnitude 1."""
    if omega < 0:
        raise ValueError("angular frequency must be non-negative")
    return np.exp(-1j * omega * np.asarray(delays, dtype=float))


def select_pairs(geom: ArrayGeometry, speed_of_sound: float, f_max: float) -> PairSet:
    """All pairs (i < j) with inter-mic distance strictly below v/f_max.

    Raises EmptyPairSet when no pair qualifies, which signals that f_max is
    too high for this geometry.
    """
    if speed_of_sound <= 0:
        raise ValueError("speed of sound must be positive")
    if f_max <= 0:
        raise ValueError("f_max must be positive")
    bound = speed_of_sound / f_max
    pairs = [
        (i, j)
        for i in range(geom.num_mics)
        for j in range(i + 1, geom.num_mics)
        if geom.pair_distance(i, j) < bound
    ]
    if not pairs:
        raise EmptyPairSet(
            f"no microphone pair closer than v/f_max = {bound:.4f} m "
            f"(lower f_max or use a tighter array)"
        )
    return PairSet(tuple(pairs), f_max, speed_of_sound)


def direction_grid(
    azimuth_step: float = 1.0,
    elevation_step: float = 5.0,
    elevations: Iterable[float] | None = None,
) -> tuple[Direction, ...]:
    """DOA search grid: azimuths spanning (-180, 180], elevations [-90, 90].

    Pass ``elevations`` (e.g. ``[0.0]``) to pin the elevation plane, the usual
    choice for planar arrays.  Ordering is elevation-major, then azimuth
    ascending, and is deterministic.
    """
    if azimuth_step <= 0 or elevation_step <= 0:
        raise ValueError("grid steps must be positive")
    n_az = int(round(360.0 / azimuth_step))
    azimuths = -180.0 + azimuth_step * np.arange(1, n_az + 1)
    if elevations is None:
        n_el = int(math.floor(180.0 / elevation_step))
        els = -90.0 + elevation_step * np.arange(n_el + 1)
        els = els[els <= 90.0 + 1e-12]
    else:
        els = np.asarray(list(elevations), dtype=float)
    return tuple(
        Direction(float(az), float(el)) for el in els for az in azimuths
    )


def load_geometry(path: str | Path) -> ArrayGeometry:
    """Read a geometry JSON file.

    Schema: ``{"name": str, "speed_of_sound": float (optional, m/s),
    "mics": [[x, y, z], ...] (meters)}``.
    """
    with open(path, "r", encoding="utf-8") as handle:
        raw = json.load(handle)
    if "mics" not in raw:
        raise ValueError(f"{path}: geometry file missing 'mics'")
    return ArrayGeometry(
        mics=np.asarray(raw["mics"], dtype=float),
        name=str(raw.get("name", Path(path).stem)),
        speed_of_sound=float(raw.get("speed_of_sound", SPEED_OF_SOUND)),
    )


def save_geometry(geom: ArrayGeometry, path: str | Path) -> None:
    payload = {
        "name": geom.name,
        "speed_of_sound": geom.speed_of_sound,
        "mics": geom.mics.tolist(),
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def uniform_circular_array(
    num_mics: int,
    radius: float,
    name: str = "uca",
    speed_of_sound: float = SPEED_OF_SOUND,
) -> ArrayGeometry:
    """UCA in the z=0 plane, mic 0 on the +x axis, counter-clockwise order."""
    angles = 2.0 * np.pi * np.arange(num_mics) / num_mics
    mics = np.stack(
        [radius * np.cos(angles), radius * np.sin(angles), np.zeros(num_mics)], axis=1
    )
    return ArrayGeometry(mics=mics, name=name, speed_of_sound=speed_of_sound)
