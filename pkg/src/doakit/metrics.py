"""Angular errors and cutoff-clamped RMSE scoring of DOA trajectories.

With a single source per frame there is no assignment problem and no
cardinality term, so the per-frame score reduces to the angular distance
clamped at the cutoff; the aggregate is the p-th-power mean of the clamped
errors, i.e. plain RMSE for p = 2.  Azimuth and elevation are scored
separately, azimuth on the circle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyInput, NoOverlap


@dataclass(frozen=True)
class TrajectoryEntry:
    time: float
    azimuth: float
    elevation: float
    valid: bool = True


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered DOA estimates; invalid entries carry no angle semantics."""

    entries: tuple[TrajectoryEntry, ...]

    def __post_init__(self):
        times = [e.time for e in self.entries]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trajectory timestamps must be strictly increasing")
        for e in self.entries:
            if not e.valid:
                continue
            if not (-180.0 < e.azimuth <= 180.0) or not (-90.0 <= e.elevation <= 90.0):
                raise ValueError(f"angles out of bounds at t={e.time}")

    def valid_entries(self) -> list[TrajectoryEntry]:
        return [e for e in self.entries if e.valid]


@dataclass(frozen=True)
class OspaConfig:
    cutoff: float = 20.0  # degrees
    power: float = 2.0

    def __post_init__(self):
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")
        if self.power < 1:
            raise ValueError("power must be >= 1")


@dataclass(frozen=True)
class MatchedPair:
    time: float
    est_azimuth: float
    est_elevation: float
    true_azimuth: float
    true_elevation: float


@dataclass(frozen=True)
class OspaResult:
    per_frame: tuple[tuple[float, float, float], ...]  # (time, az_err, el_err), clamped
    rmse_azimuth: float
    rmse_elevation: float
    frames_scored: int


def angular_error(a: float, b: float, circular: bool = True) -> float:
    """Absolute angle difference in degrees; circular wraps onto [0, 180]."""
    if not circular:
        return abs(a - b)
    return min(abs(a - b + 360.0 * k) for k in (-1, 0, 1))


def wrap_degrees(angle: float) -> float:
    """Map any angle onto (-180, 180]."""
    wrapped = math.fmod(angle + 180.0, 360.0)
    if wrapped <= 0.0:
        wrapped += 360.0
    return wrapped - 180.0


def interpolate_direction(
    t: float,
    t0: float,
    az0: float,
    el0: float,
    t1: float,
    az1: float,
    el1: float,
) -> tuple[float, float]:
    """Linear interpolation, azimuth along the shortest arc on the circle."""
    if t1 == t0:
        return az0, el0
    frac = (t - t0) / (t1 - t0)
    delta = wrap_degrees(az1 - az0)
    az = wrap_degrees(az0 + frac * delta)
    el = el0 + frac * (el1 - el0)
    return az, el


def align(
    estimate: Trajectory, truth: Trajectory, max_gap: float = 0.1
) -> tuple[list[MatchedPair], int]:
    """Pair each valid estimate with truth interpolated at its timestamp.

    Estimates farther than ``max_gap`` seconds from every truth sample are
    dropped; the second return value counts them.  Raises NoOverlap when
    nothing can be paired.
    """
    truth_entries = truth.valid_entries()
    if not truth_entries:
        raise NoOverlap("ground truth has no valid entries")
    times = np.array([e.time for e in truth_entries])
    pairs: list[MatchedPair] = []
    dropped = 0
    for est in estimate.valid_entries():
        t = est.time
        pos = int(np.searchsorted(times, t))
        if pos == 0 or pos == len(times):
            # before the first / after the last truth sample: nearest endpoint
            ref = truth_entries[0] if pos == 0 else truth_entries[-1]
            if abs(t - ref.time) > max_gap:
                dropped += 1
                continue
            az, el = ref.azimuth, ref.elevation
        else:
            left, right = truth_entries[pos - 1], truth_entries[pos]
            if min(t - left.time, right.time - t) > max_gap:
                dropped += 1
                continue
            az, el = interpolate_direction(
                t, left.time, left.azimuth, left.elevation,
                right.time, right.azimuth, right.elevation,
            )
        pairs.append(
            MatchedPair(
                time=t,
                est_azimuth=est.azimuth,
                est_elevation=est.elevation,
                true_azimuth=az,
                true_elevation=el,
            )
        )
    if not pairs:
        raise NoOverlap("no estimate falls within max_gap of the ground truth")
    return pairs, dropped


def ospa_rmse(pairs: Sequence[MatchedPair], cfg: OspaConfig = OspaConfig()) -> OspaResult:
    """Cutoff-clamped p-th-power mean error, per angle axis."""
    if not pairs:
        raise EmptyInput("no matched pairs to score")
    c, p = cfg.cutoff, cfg.power
    per_frame = []
    for m in pairs:
        az_err = min(c, angular_error(m.est_azimuth, m.true_azimuth, circular=True))
        el_err = min(c, angular_error(m.est_elevation, m.true_elevation, circular=False))
        per_frame.append((m.time, az_err, el_err))
    az = np.array([e[1] for e in per_frame])
    el = np.array([e[2] for e in per_frame])
    return OspaResult(
        per_frame=tuple(per_frame),
        rmse_azimuth=float(np.mean(az**p) ** (1.0 / p)),
        rmse_elevation=float(np.mean(el**p) ** (1.0 / p)),
        frames_scored=len(per_frame),
    )


def evaluate_trajectories(
    estimate: Trajectory,
    truth: Trajectory,
    cfg: OspaConfig = OspaConfig(),
    max_gap: float = 0.1,
) -> tuple[OspaResult, int]:
    """align + ospa_rmse; returns the result and the dropped-estimate count."""
    pairs, dropped = align(estimate, truth, max_gap)
    return ospa_rmse(pairs, cfg), dropped


# ---------------------------------------------------------------------------
# File formats

def read_truth_csv(path: str | Path) -> Trajectory:
    """Ground-truth CSV: header ``time_s,azimuth_deg,elevation_deg`` required."""
    entries = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != [
            "time_s",
            "azimuth_deg",
            "elevation_deg",
        ]:
            raise ValueError(
                f"{path}: expected header 'time_s,azimuth_deg,elevation_deg'"
            )
        for row in reader:
            if not row:
                continue
            entries.append(
                TrajectoryEntry(
                    time=float(row[0]),
                    azimuth=float(row[1]),
                    elevation=float(row[2]),
                )
            )
    return Trajectory(tuple(entries))


def read_trajectory_csv(path: str | Path) -> Trajectory:
    """Estimate CSV: same columns as truth plus an optional ``valid`` column."""
    entries = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != [
            "time_s",
            "azimuth_deg",
            "elevation_deg",
        ]:
            raise ValueError(
                f"{path}: expected header starting 'time_s,azimuth_deg,elevation_deg'"
            )
        has_valid = len(header) > 3 and header[3].strip() == "valid"
        for row in reader:
            if not row:
                continue
            az, el = float(row[1]), float(row[2])
            valid = bool(int(row[3])) if has_valid else True
            if math.isnan(az) or math.isnan(el):
                valid = False
                az, el = 0.0, 0.0
            entries.append(
                TrajectoryEntry(time=float(row[0]), azimuth=az, elevation=el, valid=valid)
            )
    return Trajectory(tuple(entries))


def write_truth_csv(trajectory: Trajectory, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("time_s,azimuth_deg,elevation_deg\n")
        for e in trajectory.entries:
            handle.write(f"{e.time:.6f},{e.azimuth:.6f},{e.elevation:.6f}\n")


def write_trajectory_csv(trajectory: Trajectory, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("time_s,azimuth_deg,elevation_deg,valid\n")
        for e in trajectory.entries:
            if e.valid:
                handle.write(f"{e.time:.6f},{e.azimuth:.6f},{e.elevation:.6f},1\n")
            else:
                handle.write(f"{e.time:.6f},nan,nan,0\n")


def write_ospa_csv(result: OspaResult, path: str | Path) -> None:
    """Per-frame clamped errors; the final row is labeled ``rmse``."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("time_s,azimuth_error_deg,elevation_error_deg\n")
        for t, az_err, el_err in result.per_frame:
            handle.write(f"{t:.6f},{az_err:.6f},{el_err:.6f}\n")
        handle.write(f"rmse,{result.rmse_azimuth:.6f},{result.rmse_elevation:.6f}\n")
