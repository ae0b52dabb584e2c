"""Framing, STFT, cross-power spectral density and PHAT prefiltering.

This is the shared front end of both estimators.  Spectra are one-sided
(real input), so a frame of N samples yields N/2 + 1 bins and bin n sits at
angular frequency ``omega_n = 2 pi f_s n / N``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import SignalTooShort

WINDOWS = ("rectangular", "hann")

# Relative magnitude below which a PHAT bin is zeroed instead of normalized.
PHAT_GUARD = 1e-12


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters: frame length (power of two), hop, window, band."""

    frame_len: int = 2048
    hop: int = 1024
    window: str = "hann"
    sample_rate: float = 48000.0
    band: tuple[float, float] = (300.0, 4000.0)

    def __post_init__(self):
        n = self.frame_len
        if n <= 0 or (n & (n - 1)) != 0:
            raise ValueError(f"frame_len must be a power of two, got {n}")
        if not (0 < self.hop <= n):
            raise ValueError(f"hop must be in (0, {n}], got {self.hop}")
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {WINDOWS}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        f_min, f_max = self.band
        if not (0 <= f_min < f_max <= self.sample_rate / 2):
            raise ValueError(
                f"band {self.band} must satisfy 0 <= f_min < f_max <= f_s/2"
            )

    @property
    def num_bins(self) -> int:
        return self.frame_len // 2 + 1

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.num_bins) * self.sample_rate / self.frame_len

    def omegas(self) -> np.ndarray:
        """Angular frequency of every bin, rad/s."""
        return 2.0 * np.pi * self.bin_frequencies()

    def band_bins(self) -> np.ndarray:
        """Indices of the retained bins: f_min <= f_n <= f_max (inclusive)."""
        f = self.bin_frequencies()
        return np.flatnonzero((f >= self.band[0]) & (f <= self.band[1]))

    def window_samples(self) -> np.ndarray:
        if self.window == "rectangular":
            return np.ones(self.frame_len)
        # periodic Hann: sums to a constant at hop = frame_len / 2
        n = np.arange(self.frame_len)
        return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / self.frame_len))

    def frame_time(self, frame_index: int) -> float:
        """Timestamp of a frame, taken at the frame center."""
        return (frame_index * self.hop + self.frame_len / 2) / self.sample_rate

    def num_frames(self, num_samples: int) -> int:
        if num_samples < self.frame_len:
            return 0
        return (num_samples - self.frame_len) // self.hop + 1


@dataclass(frozen=True, eq=False)
class SpectralFrame:
    """One STFT frame: (num_channels, num_bins) complex coefficients."""

    coeffs: np.ndarray
    frame_index: int
    time: float

    @property
    def num_channels(self) -> int:
        return self.coeffs.shape[0]


@dataclass(frozen=True, eq=False)
class CrossSpectrum:
    """Cross-power spectral density of one channel pair for one frame.

    ``values`` has one entry per bin; bins outside the retained band are zero.
    Swapping the pair conjugates the values (Hermitian pairing).
    """

    values: np.ndarray
    pair: tuple[int, int]
    frame_index: int


def stft_array(signal: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Windowed one-sided STFT, returned as (num_frames, channels, num_bins)."""
    x = np.atleast_2d(np.asarray(signal, dtype=float))
    if x.shape[1] < cfg.frame_len:
        raise SignalTooShort(
            f"signal has {x.shape[1]} samples, need at least {cfg.frame_len}"
        )
    n_frames = cfg.num_frames(x.shape[1])
    # (channels, n_frames, frame_len) view, no copy
    slices = sliding_window_view(x, cfg.frame_len, axis=1)[:, :: cfg.hop, :]
    slices = slices[:, :n_frames, :]
    windowed = slices * cfg.window_samples()
    return np.fft.rfft(windowed, axis=-1).transpose(1, 0, 2)


def stft(signal: np.ndarray, cfg: StftConfig) -> list[SpectralFrame]:
    """Frame, window and transform a multichannel signal.

    ``signal`` is (channels, samples) or (samples,).  Frame count is
    ``(samples - frame_len) // hop + 1``.
    """
    coeffs = stft_array(signal, cfg)
    return [
        SpectralFrame(coeffs=coeffs[k], frame_index=k, time=cfg.frame_time(k))
        for k in range(coeffs.shape[0])
    ]


def istft(frames: Sequence[SpectralFrame], cfg: StftConfig) -> np.ndarray:
    """Overlap-add reconstruction of an stft() output.

    Inverse-transforms each windowed frame and divides by the accumulated
    window coverage, which undoes the analysis window wherever coverage is
    nonzero.  Samples with (near) zero coverage are returned as zero.
    """
    if not frames:
        return np.zeros((1, 0))
    n = cfg.frame_len
    channels = frames[0].num_channels
    length = (len(frames) - 1) * cfg.hop + n
    out = np.zeros((channels, length))
    coverage = np.zeros(length)
    win = cfg.window_samples()
    for k, frame in enumerate(frames):
        start = k * cfg.hop
        out[:, start : start + n] += np.fft.irfft(frame.coeffs, n=n, axis=-1)
        coverage[start : start + n] += win
    mask = coverage > 1e-12
    out[:, mask] /= coverage[mask]
    out[:, ~mask] = 0.0
    return out


def csd(frame: SpectralFrame, pair: tuple[int, int], cfg: StftConfig) -> CrossSpectrum:
    """Single-frame CSD estimate: (N / f_s) * X_i * conj(X_j), band-limited.

    The expectation is realized as the instantaneous per-frame product; bins
    outside cfg.band are zeroed.
    """
    i, j = pair
    if i == j:
        raise ValueError("csd needs two distinct channels")
    if not (0 <= i < frame.num_channels and 0 <= j < frame.num_channels):
        raise ValueError(f"pair {pair} out of range for {frame.num_channels} channels")
    values = (
        (cfg.frame_len / cfg.sample_rate)
        * frame.coeffs[i]
        * np.conj(frame.coeffs[j])
    )
    mask = np.zeros(cfg.num_bins, dtype=bool)
    mask[cfg.band_bins()] = True
    values = np.where(mask, values, 0.0 + 0.0j)
    return CrossSpectrum(values=values, pair=(i, j), frame_index=frame.frame_index)


def phat_weight(cross: CrossSpectrum) -> CrossSpectrum:
    """PHAT prefilter: divide every bin by its magnitude, keeping phase only.

    Bins whose magnitude falls below PHAT_GUARD times the frame's in-band
    maximum are zeroed instead of amplified.
    """
    values = cross.values
    mags = np.abs(values)
    guard = PHAT_GUARD * mags.max(initial=0.0)
    out = np.zeros_like(values)
    np.divide(values, mags, out=out, where=mags > guard)
    return CrossSpectrum(values=out, pair=cross.pair, frame_index=cross.frame_index)


def phat_normalize(values: np.ndarray) -> np.ndarray:
    """Vectorized phat_weight over stacked spectra.

    ``values`` is (..., num_frames) with bins on the leading axes; the guard is
    relative to each frame's maximum magnitude (columns are frames).
    """
    mags = np.abs(values)
    guard = PHAT_GUARD * mags.max(axis=tuple(range(values.ndim - 1)), keepdims=True)
    out = np.zeros_like(values)
    np.divide(values, mags, out=out, where=mags > guard)
    return out
