"""Synthetic far-field scene generation for ground-truth fixtures.

A scene is one plane-wave source moving along a knotted trajectory plus
independent white noise per channel.  Motion is approximated by holding the
direction constant over 256-sample blocks (direction linearly interpolated
between knots at each block center), which is far finer than any analysis
frame.  Each channel applies the per-block steering delay to the source with
a frequency-domain fractional delay.

The generator is fully deterministic given a SceneSpec (including the seed)
and doubles as the oracle source for the estimator tests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import DelayTooLarge
from .geometry import (
    ArrayGeometry,
    Direction,
    load_geometry,
    save_geometry,
    unit_vector,
)
from .metrics import (
    Trajectory,
    TrajectoryEntry,
    interpolate_direction,
    wrap_degrees,
    write_truth_csv,
)
from .wavio import read_wav, write_wav

BLOCK_SAMPLES = 256

SOURCE_KINDS = ("white", "speech", "wav")

# Poles of the coloring filter for the speech-like source: four conjugate
# pairs at fixed normalized frequencies (cycles/sample).  Applied to white
# noise this gives the non-flat, formant-ish spectrum PHAT is meant to whiten.
_SPEECH_POLE_FREQS = (0.031, 0.094, 0.156, 0.250)
_SPEECH_POLE_RADII = (0.97, 0.95, 0.92, 0.85)


def speech_ar_coefficients() -> np.ndarray:
    """Denominator coefficients of the fixed 8-pole speech-like AR filter."""
    poles = []
    for f, r in zip(_SPEECH_POLE_FREQS, _SPEECH_POLE_RADII):
        poles.append(r * np.exp(2j * np.pi * f))
        poles.append(r * np.exp(-2j * np.pi * f))
    return np.poly(poles).real


@dataclass(frozen=True)
class SourceSpec:
    kind: str = "speech"
    path: str | None = None

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"source kind must be one of {SOURCE_KINDS}")
        if self.kind == "wav" and not self.path:
            raise ValueError("wav source needs a path")


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to synthesize one scene, deterministically."""

    geometry: ArrayGeometry
    trajectory: tuple[tuple[float, Direction], ...]
    duration: float  # seconds
    sample_rate: float  # Hz
    snr_db: float = math.inf
    source: SourceSpec = field(default_factory=SourceSpec)
    seed: int = 0
    activity: tuple[tuple[float, float], ...] | None = None  # on-intervals, seconds

    def __post_init__(self):
        if self.duration <= 0 or self.sample_rate <= 0:
            raise ValueError("duration and sample_rate must be positive")
        if not self.trajectory:
            raise ValueError("trajectory needs at least one knot")
        times = [t for t, _ in self.trajectory]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trajectory knots must be time-ordered")
        if times[0] < 0 or times[-1] > self.duration:
            raise ValueError("trajectory knots must lie within [0, duration]")
        if math.isnan(self.snr_db):
            raise ValueError("snr_db must not be NaN")


def fractional_delay(signal: np.ndarray, tau: float, sample_rate: float) -> np.ndarray:
    """Delay a signal by ``tau`` seconds via a frequency-domain phase shift.

    The shift is circular (DFT, multiply bin n by exp(-j omega_n tau),
    inverse DFT), so it is exactly unitary: energy is conserved and integer
    delays shift sample-exactly, up to wraparound at the ends.  Callers who
    need linear (non-wrapping) behavior must leave at least
    ceil(|tau| * f_s) + 1 samples of zero padding, as the scene generator
    does.  Positive tau moves content toward later samples.
    """
    x = np.asarray(signal, dtype=float)
    n = x.shape[-1]
    if abs(tau) * sample_rate >= n:
        raise DelayTooLarge(
            f"|tau| = {abs(tau):.6g} s exceeds the {n / sample_rate:.6g} s signal"
        )
    spectrum = np.fft.rfft(x)
    omegas = 2.0 * np.pi * sample_rate * np.arange(spectrum.shape[-1]) / n
    shift = np.exp(-1j * omegas * tau)
    if n % 2 == 0:
        # a real signal's Nyquist bin cannot carry a fractional phase; the
        # cosine keeps the output real and is exact for integer delays
        shift[-1] = np.cos(omegas[-1] * tau)
    return np.fft.irfft(spectrum * shift, n=n)


def _interp_knots(
    knots: tuple[tuple[float, Direction], ...], t: float
) -> tuple[float, float]:
    """Direction angles at time t: azimuth along the shortest arc."""
    if t <= knots[0][0]:
        d = knots[0][1]
        return d.azimuth, d.elevation
    if t >= knots[-1][0]:
        d = knots[-1][1]
        return d.azimuth, d.elevation
    for (t0, d0), (t1, d1) in zip(knots, knots[1:]):
        if t0 <= t <= t1:
            return interpolate_direction(
                t, t0, d0.azimuth, d0.elevation, t1, d1.azimuth, d1.elevation
            )
    d = knots[-1][1]
    return d.azimuth, d.elevation


def _activity_mask(spec: SceneSpec, num_samples: int) -> np.ndarray:
    """Per-sample on/off envelope with 5 ms raised-cosine edges."""
    if spec.activity is None:
        return np.ones(num_samples)
    mask = np.zeros(num_samples)
    ramp = max(1, int(round(0.005 * spec.sample_rate)))
    edge = 0.5 * (1.0 - np.cos(np.pi * np.arange(ramp) / ramp))
    for start, stop in spec.activity:
        a = max(0, int(round(start * spec.sample_rate)))
        b = min(num_samples, int(round(stop * spec.sample_rate)))
        if b <= a:
            continue
        mask[a:b] = 1.0
        ramp_len = min(ramp, (b - a) // 2)
        if ramp_len > 0:
            mask[a : a + ramp_len] = edge[:ramp_len]
            mask[b - ramp_len : b] = edge[:ramp_len][::-1]
    return mask


def _source_signal(spec: SceneSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    if spec.source.kind == "white":
        s = rng.standard_normal(n)
    elif spec.source.kind == "speech":
        s = lfilter([1.0], speech_ar_coefficients(), rng.standard_normal(n))
    else:
        data, rate = read_wav(spec.source.path)
        if data.shape[0] != 1:
            raise ValueError("wav source must be mono")
        if abs(rate - spec.sample_rate) > 1e-6:
            raise ValueError(
                f"wav source rate {rate} Hz does not match scene rate "
                f"{spec.sample_rate} Hz"
            )
        s = np.tile(data[0], int(np.ceil(n / data.shape[1])))[:n]
    rms = np.sqrt(np.mean(s**2))
    if rms > 0:
        s = s / rms
    return s


def synthesize(spec: SceneSpec) -> tuple[np.ndarray, Trajectory]:
    """Render the scene; returns (channels x samples, ground-truth trajectory).

    Ground truth is sampled at the block rate (BLOCK_SAMPLES / f_s, about
    5 ms at 48 kHz), fine enough for evaluation at any analysis frame rate.
    """
    fs = spec.sample_rate
    n = int(round(spec.duration * fs))
    if n < BLOCK_SAMPLES:
        raise ValueError("scene shorter than one synthesis block")
    rng = np.random.default_rng(spec.seed)
    source = _source_signal(spec, rng, n) * _activity_mask(spec, n)

    mics = spec.geometry.mics
    v = spec.geometry.speed_of_sound
    num_mics = spec.geometry.num_mics
    starts = np.arange(0, n, BLOCK_SAMPLES)
    centers = (starts + np.minimum(starts + BLOCK_SAMPLES, n)) / 2.0 / fs

    angles = [_interp_knots(spec.trajectory, t) for t in centers]
    units = np.array(
        [unit_vector(Direction(az, el)) for az, el in angles]
    )  # (blocks, 3)
    delays = -(units @ mics.T) / v  # (blocks, num_mics)

    max_tau = float(np.max(np.abs(delays)))
    margin = max(64, int(math.ceil(max_tau * fs)) + 8)
    if margin >= n:
        raise DelayTooLarge(
            f"array span needs {margin} samples of margin but the scene has {n}"
        )

    channels = np.empty((num_mics, n))
    padded = np.concatenate([np.zeros(margin), source, np.zeros(margin)])
    if np.ptp(delays, axis=0).max() == 0.0:
        # static source: one whole-signal delay per channel, no block seams
        for i in range(num_mics):
            shifted = fractional_delay(padded, float(delays[0, i]), fs)
            channels[i] = shifted[margin : margin + n]
    else:
        for i in range(num_mics):
            for b, start in enumerate(starts):
                stop = min(start + BLOCK_SAMPLES, n)
                chunk = padded[start : stop + 2 * margin]
                shifted = fractional_delay(chunk, float(delays[b, i]), fs)
                channels[i, start:stop] = shifted[margin : margin + (stop - start)]

    if math.isfinite(spec.snr_db):
        active = _activity_mask(spec, n) > 0.5
        reference = source[active] if active.any() else source
        source_power = float(np.mean(reference**2))
        sigma = math.sqrt(source_power * 10.0 ** (-spec.snr_db / 10.0))
        for i in range(num_mics):
            channels[i] += sigma * rng.standard_normal(n)

    entries = tuple(
        TrajectoryEntry(time=float(t), azimuth=wrap_degrees(az), elevation=el)
        for t, (az, el) in zip(centers, angles)
    )
    return channels, Trajectory(entries)


# ---------------------------------------------------------------------------
# Scene files

def load_scene(path: str | Path) -> SceneSpec:
    """Read a scene spec JSON; see README for the schema."""
    base = Path(path).parent
    with open(path, "r", encoding="utf-8") as handle:
        raw = json.load(handle)
    if "geometry" in raw:
        geom = ArrayGeometry(
            mics=np.asarray(raw["geometry"]["mics"], dtype=float),
            name=str(raw["geometry"].get("name", "scene-array")),
            speed_of_sound=float(raw["geometry"].get("speed_of_sound", 343.0)),
        )
    elif "geometry_path" in raw:
        geom = load_geometry(base / raw["geometry_path"])
    else:
        raise ValueError(f"{path}: scene needs 'geometry' or 'geometry_path'")

    knots = tuple(
        (float(k["time"]), Direction(float(k["azimuth"]), float(k["elevation"])))
        for k in raw["trajectory"]
    )
    source_raw = raw.get("source", "speech")
    if isinstance(source_raw, str):
        source = SourceSpec(kind=source_raw)
    else:
        src_path = source_raw.get("path")
        if src_path is not None:
            src_path = str(base / src_path)
        source = SourceSpec(kind=source_raw.get("kind", "speech"), path=src_path)
    snr = raw.get("snr_db")
    activity = raw.get("activity")
    return SceneSpec(
        geometry=geom,
        trajectory=knots,
        duration=float(raw["duration_s"]),
        sample_rate=float(raw["sample_rate"]),
        snr_db=math.inf if snr is None else float(snr),
        source=source,
        seed=int(raw.get("seed", 0)),
        activity=None
        if activity is None
        else tuple((float(a), float(b)) for a, b in activity),
    )


def write_scene_outputs(
    spec: SceneSpec, out_dir: str | Path, stem: str = "scene"
) -> dict[str, str]:
    """Render a scene and write the WAV + truth CSV + geometry JSON triple."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    channels, truth = synthesize(spec)
    peak = float(np.max(np.abs(channels)))
    if peak > 1.0:
        channels = channels * (0.99 / peak)
    wav_path = out / f"{stem}.wav"
    truth_path = out / f"{stem}_truth.csv"
    geom_path = out / f"{stem}_geometry.json"
    write_wav(wav_path, channels, spec.sample_rate, "float32")
    write_truth_csv(truth, truth_path)
    save_geometry(spec.geometry, geom_path)
    return {
        "wav": str(wav_path),
        "truth": str(truth_path),
        "geometry": str(geom_path),
    }
