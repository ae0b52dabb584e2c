"""Batch localization pipeline: ingest, gate, estimate, score, emit.

``run`` drives the whole chain from a config of file paths and parameters;
``analyze`` is the in-memory core (signals in, trajectories out), used by the
service, the CLI and the test fixtures alike.  Every failure is surfaced as a
PipelineError tagged with the stage name (and frame index where meaningful),
and any results computed before the failure are already flushed to disk.

Output files are byte-reproducible: timings live only in the returned report,
never in the artifacts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DoakitError, PipelineError
from .geometry import (
    ArrayGeometry,
    Direction,
    direction_grid,
    load_geometry,
    select_pairs,
)
from .mccphat import mcc_phat_spectra_frames
from .metrics import (
    OspaConfig,
    OspaResult,
    Trajectory,
    TrajectoryEntry,
    evaluate_trajectories,
    read_truth_csv,
    write_ospa_csv,
    write_trajectory_csv,
)
from .spectral import StftConfig, stft_array
from .subspace import MusicConfig, music_spectra_blocks
from .wavio import read_wav

METHODS = ("music", "mccphat", "both")

GATE_INIT_FRAMES = 10


@dataclass(frozen=True)
class RunConfig:
    """Parameters of one batch localization run."""

    geometry: str
    input: str
    out: str | None = None
    method: str = "both"
    truth: str | None = None
    frame_len: int = 2048
    hop: int = 1024
    window: str = "hann"
    band: tuple[float, float] = (300.0, 4000.0)
    grid_azimuth_step: float = 1.0
    grid_elevation_step: float = 5.0
    num_sources: int = 1
    block: int = 8
    gate_threshold_db: float = 6.0
    cutoff: float = 20.0
    power: float = 2.0
    max_gap: float = 0.1

    def requested_methods(self) -> tuple[str, ...]:
        return ("music", "mccphat") if self.method == "both" else (self.method,)


@dataclass
class MethodResult:
    trajectory: Trajectory
    spectra: np.ndarray  # (kept_frames, grid) objective values
    wall_seconds: float
    ospa: OspaResult | None = None
    dropped_estimates: int = 0
    files: dict[str, str] = field(default_factory=dict)


@dataclass
class RunReport:
    sample_rate: float
    num_channels: int
    frames_total: int
    frames_kept: int
    frames_dropped: int
    grid: tuple[Direction, ...]
    methods: dict[str, MethodResult]


def band_energies(coeffs: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Per-frame energy in the retained band, summed over channels."""
    bins = cfg.band_bins()
    return np.sum(np.abs(coeffs[:, :, bins]) ** 2, axis=(1, 2))


def energy_gate(
    coeffs: np.ndarray, cfg: StftConfig, threshold_db: float = 6.0
) -> np.ndarray:
    """Keep/drop flag per frame.

    The noise floor starts at the median band energy of the first
    GATE_INIT_FRAMES frames and then tracks the running minimum; a frame is
    kept when its band energy clears floor + threshold_db.
    """
    energies = band_energies(coeffs, cfg)
    levels = 10.0 * np.log10(energies + 1e-300)
    floor = float(np.median(levels[: min(GATE_INIT_FRAMES, len(levels))]))
    keep = np.empty(len(levels), dtype=bool)
    for k, level in enumerate(levels):
        keep[k] = level >= floor + threshold_db
        floor = min(floor, level)
    return keep


def make_grid(config: RunConfig, geom: ArrayGeometry) -> tuple[Direction, ...]:
    """DOA grid for a run; planar arrays collapse elevation to the 0 plane."""
    elevations = [0.0] if geom.is_planar() else None
    return direction_grid(
        config.grid_azimuth_step, config.grid_elevation_step, elevations
    )


def _trajectory_from_scores(
    scores: np.ndarray,
    kept: np.ndarray,
    times: np.ndarray,
    grid: Sequence[Direction],
) -> Trajectory:
    best = np.argmax(scores, axis=1)
    by_frame = dict(zip(kept.tolist(), best.tolist()))
    entries = []
    for k, t in enumerate(times):
        if k in by_frame:
            d = grid[by_frame[k]]
            entries.append(
                TrajectoryEntry(time=float(t), azimuth=d.azimuth, elevation=d.elevation)
            )
        else:
            entries.append(
                TrajectoryEntry(time=float(t), azimuth=0.0, elevation=0.0, valid=False)
            )
    return Trajectory(tuple(entries))


@dataclass(frozen=True, eq=False)
class _Frontend:
    """Shared front end of a run: STFT stack, frame times, gate, grid."""

    stft_cfg: StftConfig
    coeffs: np.ndarray
    times: np.ndarray
    kept: np.ndarray
    grid: tuple[Direction, ...]


def _frontend(
    signals: np.ndarray,
    sample_rate: float,
    geom: ArrayGeometry,
    config: RunConfig,
) -> _Frontend:
    try:
        stft_cfg = StftConfig(
            frame_len=config.frame_len,
            hop=config.hop,
            window=config.window,
            sample_rate=sample_rate,
            band=config.band,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    if signals.shape[0] != geom.num_mics:
        raise ConfigError(
            f"{signals.shape[0]} channels but geometry '{geom.name}' has "
            f"{geom.num_mics} microphones"
        )
    if not np.all(np.isfinite(signals)):
        raise PipelineError("ingest", "input contains non-finite samples")
    if config.method in ("music", "both") and not (
        1 <= config.num_sources < geom.num_mics
    ):
        raise ConfigError(
            f"num_sources must be in [1, {geom.num_mics - 1}], got {config.num_sources}"
        )
    with _stage("stft"):
        coeffs = stft_array(signals, stft_cfg)
    times = np.array([stft_cfg.frame_time(k) for k in range(coeffs.shape[0])])
    with _stage("gate"):
        keep = energy_gate(coeffs, stft_cfg, config.gate_threshold_db)
    kept = np.flatnonzero(keep)
    if kept.size == 0:
        raise PipelineError("gate", "energy gate dropped every frame")
    return _Frontend(
        stft_cfg=stft_cfg,
        coeffs=coeffs,
        times=times,
        kept=kept,
        grid=make_grid(config, geom),
    )


def _estimate(
    method: str, front: _Frontend, geom: ArrayGeometry, config: RunConfig
) -> MethodResult:
    start = time.perf_counter()
    if method == "mccphat":
        with _stage("mccphat"):
            pairset = select_pairs(geom, geom.speed_of_sound, config.band[1])
            scores = mcc_phat_spectra_frames(
                front.coeffs, front.kept, geom, pairset, front.grid, front.stft_cfg
            )
    else:
        with _stage("music"):
            music_cfg = MusicConfig(
                stft=front.stft_cfg, geometry=geom, num_sources=config.num_sources
            )
            scores = music_spectra_blocks(
                front.coeffs, front.kept, config.block, front.grid, music_cfg
            )
    wall = time.perf_counter() - start
    trajectory = _trajectory_from_scores(scores, front.kept, front.times, front.grid)
    return MethodResult(trajectory=trajectory, spectra=scores, wall_seconds=wall)


def analyze(
    signals: np.ndarray,
    sample_rate: float,
    geom: ArrayGeometry,
    config: RunConfig,
) -> RunReport:
    """Run the estimators on in-memory signals; no files touched."""
    front = _frontend(signals, sample_rate, geom, config)
    methods = {
        method: _estimate(method, front, geom, config)
        for method in config.requested_methods()
    }
    return RunReport(
        sample_rate=sample_rate,
        num_channels=geom.num_mics,
        frames_total=front.coeffs.shape[0],
        frames_kept=int(front.kept.size),
        frames_dropped=int(front.coeffs.shape[0] - front.kept.size),
        grid=front.grid,
        methods=methods,
    )


def run(config: RunConfig) -> RunReport:
    """Full batch run: validate config, read files, estimate, write outputs.

    Per-method outputs are written as soon as that method finishes, so a
    failure later in the run leaves the earlier results on disk.
    """
    # configuration stage: everything checkable before any audio is read
    with _stage("config"):
        if config.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        geometry_path = Path(config.geometry)
        if not geometry_path.is_file():
            raise ConfigError(f"geometry file not found: {geometry_path}")
        input_path = Path(config.input)
        if not input_path.is_file():
            raise ConfigError(f"input file not found: {input_path}")
        if config.truth is not None and not Path(config.truth).is_file():
            raise ConfigError(f"ground-truth file not found: {config.truth}")
        geom = load_geometry(geometry_path)
        if config.method in ("mccphat", "both"):
            # fails fast with EmptyPairSet when f_max is too high for the array
            select_pairs(geom, geom.speed_of_sound, config.band[1])
        out_dir = None
        if config.out is not None:
            out_dir = Path(config.out)
            out_dir.mkdir(parents=True, exist_ok=True)

    with _stage("ingest"):
        signals, sample_rate = read_wav(input_path)

    front = _frontend(signals, sample_rate, geom, config)

    truth = None
    if config.truth is not None:
        with _stage("evaluate"):
            truth = read_truth_csv(config.truth)

    report = RunReport(
        sample_rate=sample_rate,
        num_channels=geom.num_mics,
        frames_total=front.coeffs.shape[0],
        frames_kept=int(front.kept.size),
        frames_dropped=int(front.coeffs.shape[0] - front.kept.size),
        grid=front.grid,
        methods={},
    )
    ospa_cfg = OspaConfig(cutoff=config.cutoff, power=config.power)
    for method in config.requested_methods():
        result = _estimate(method, front, geom, config)
        report.methods[method] = result
        if out_dir is not None:
            with _stage("emit"):
                trajectory_path = out_dir / f"trajectory_{method}.csv"
                write_trajectory_csv(result.trajectory, trajectory_path)
                result.files["trajectory"] = str(trajectory_path)
                spectrum_path = out_dir / f"spectrum_{method}.csv"
                _write_spectrum_csv(spectrum_path, report, result)
                result.files["spectrum"] = str(spectrum_path)
                plot_path = out_dir / f"trajectory_{method}.svg"
                write_trajectory_svg(plot_path, result.trajectory, truth, method)
                result.files["plot"] = str(plot_path)
        if truth is not None:
            with _stage("evaluate"):
                result.ospa, result.dropped_estimates = evaluate_trajectories(
                    result.trajectory, truth, ospa_cfg, config.max_gap
                )
            if out_dir is not None:
                with _stage("emit"):
                    ospa_path = out_dir / f"ospa_{method}.csv"
                    write_ospa_csv(result.ospa, ospa_path)
                    result.files["ospa"] = str(ospa_path)
    return report


class _stage:
    """Context tagging errors with the pipeline stage they occurred in."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, PipelineError):
            return False
        if isinstance(exc, DoakitError):
            raise PipelineError(exc.stage, str(exc)) from exc
        if isinstance(exc, (OSError, ValueError)):
            raise PipelineError(self.name, str(exc)) from exc
        return False


def _write_spectrum_csv(path: Path, report: RunReport, result: MethodResult) -> None:
    """Heat-map data: one row per grid direction, one column per kept frame."""
    kept_times = [e.time for e in result.trajectory.entries if e.valid]
    with open(path, "w", encoding="utf-8", newline="") as handle:
        header = ["azimuth_deg", "elevation_deg"] + [f"t{t:.6f}" for t in kept_times]
        handle.write(",".join(header) + "\n")
        for g, direction in enumerate(report.grid):
            row = [f"{direction.azimuth:.3f}", f"{direction.elevation:.3f}"]
            row += [f"{v:.6e}" for v in result.spectra[:, g]]
            handle.write(",".join(row) + "\n")


def write_trajectory_svg(
    path: str | Path,
    trajectory: Trajectory,
    truth: Trajectory | None = None,
    label: str = "estimate",
) -> None:
    """Static SVG line plot of azimuth vs time, with optional truth overlay.

    Rendering is fully deterministic (no timestamps, no generated ids) so a
    repeated run reproduces the file byte for byte.
    """
    width, height = 880, 440
    left, right, top, bottom = 70, 20, 36, 50
    t_values = [e.time for e in trajectory.entries]
    if truth is not None:
        t_values += [e.time for e in truth.entries]
    t_max = max(t_values) if t_values else 1.0
    t_max = t_max if t_max > 0 else 1.0

    def sx(t: float) -> float:
        return left + (width - left - right) * t / t_max

    def sy(az: float) -> float:
        return top + (height - top - bottom) * (180.0 - az) / 360.0

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{width - left - right}" '
        f'height="{height - top - bottom}" fill="none" stroke="black"/>',
    ]
    for az in range(-180, 181, 90):
        y = sy(az)
        parts.append(
            f'<line x1="{left}" y1="{y:.2f}" x2="{width - right}" y2="{y:.2f}" '
            f'stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-size="12">{az}</text>'
        )
    for k in range(6):
        t = t_max * k / 5.0
        x = sx(t)
        parts.append(
            f'<text x="{x:.2f}" y="{height - bottom + 18}" text-anchor="middle" '
            f'font-size="12">{t:.2f}</text>'
        )
    parts.append(
        f'<text x="{(left + width - right) / 2:.2f}" y="{height - 12}" '
        f'text-anchor="middle" font-size="13">time (s)</text>'
    )
    parts.append(
        f'<text x="16" y="{(top + height - bottom) / 2:.2f}" font-size="13" '
        f'transform="rotate(-90 16 {(top + height - bottom) / 2:.2f})" '
        f'text-anchor="middle">azimuth (deg)</text>'
    )
    parts.append(
        f'<text x="{(left + width - right) / 2:.2f}" y="22" text-anchor="middle" '
        f'font-size="14">{label}: azimuth vs time</text>'
    )
    if truth is not None:
        for segment in _unwrapped_segments(truth):
            points = " ".join(f"{sx(t):.2f},{sy(az):.2f}" for t, az in segment)
            parts.append(
                f'<polyline points="{points}" fill="none" stroke="#cc0000" '
                f'stroke-width="1.5"/>'
            )
    for e in trajectory.entries:
        if e.valid:
            parts.append(
                f'<circle cx="{sx(e.time):.2f}" cy="{sy(e.azimuth):.2f}" r="2" '
                f'fill="#1f5fbf"/>'
            )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def _unwrapped_segments(trajectory: Trajectory) -> list[list[tuple[float, float]]]:
    """Split a truth curve where the azimuth wraps across +-180."""
    segments: list[list[tuple[float, float]]] = []
    current: list[tuple[float, float]] = []
    previous = None
    for e in trajectory.valid_entries():
        if previous is not None and abs(e.azimuth - previous) > 180.0:
            segments.append(current)
            current = []
        current.append((e.time, e.azimuth))
        previous = e.azimuth
    if current:
        segments.append(current)
    return segments
