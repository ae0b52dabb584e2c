"""GCC-PHAT correlation, TDOA estimation, and the MCC-PHAT spatial spectrum.

The correlation is evaluated directly in the frequency domain at arbitrary
real lags, because the lags hypothesized by a DOA grid are not integer sample
counts.  For a one-sided spectrum G over bins n the value at lag tau is

    R(tau) = Re( sum_n w_n G(omega_n) exp(j omega_n tau) )

with w_n = 2 except at DC and Nyquist (w = 1), which reproduces the two-sided
sum for Hermitian G.  With G identically 1 on all bins this gives exactly N
at tau = 0.

The MCC-PHAT score of a direction is the product over the alias-safe pair set
of the per-pair correlations, each floored at a small positive value so that
a single negative pair cannot flip the sign of the product.  The floor is
relative: FLOOR_RATIO times the pair's peak correlation over its physical lag
range in that frame (with a tiny absolute fallback when the peak is not
positive, keeping scores strictly positive).  Scores are accumulated as sums
of logs to avoid underflow across many pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import ArrayGeometry, Direction, PairSet, steering_matrix
from .spectral import SpectralFrame, StftConfig, csd, phat_normalize, phat_weight

# Floor for the product terms, relative to the pair's peak correlation.
FLOOR_RATIO = 1e-3
# Absolute fallback when a pair's peak correlation is not positive.
FLOOR_MIN = 1e-300

# Default lag-search resolution as a fraction of the sample period.
TDOA_RESOLUTION_DIVISOR = 4


@dataclass(frozen=True, eq=False)
class GccCorrelation:
    """PHAT-weighted cross spectrum of one pair, ready for lag evaluation."""

    spectrum: np.ndarray  # unit-magnitude bins (zero where gated / out of band)
    omegas: np.ndarray  # rad/s per bin
    pair: tuple[int, int]
    frame_index: int


@dataclass(frozen=True, eq=False)
class TdoaEstimate:
    pair: tuple[int, int]
    tau_hat: float  # seconds
    peak_value: float


@dataclass(frozen=True, eq=False)
class SpatialSpectrum:
    """Objective value over a DOA grid for one frame."""

    grid: tuple[Direction, ...]
    scores: np.ndarray
    frame_index: int
    method: str  # "music" or "mccphat"

    def argmax_direction(self) -> Direction:
        return self.grid[int(np.argmax(self.scores))]


def bin_weights(num_bins: int) -> np.ndarray:
    """One-sided doubling weights: 2 everywhere except DC and Nyquist."""
    w = np.full(num_bins, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return w


def gcc_correlation(
    frame: SpectralFrame, pair: tuple[int, int], cfg: StftConfig
) -> GccCorrelation:
    """Cross spectrum of ``pair`` in ``frame``, PHAT-prefiltered."""
    weighted = phat_weight(csd(frame, pair, cfg))
    return GccCorrelation(
        spectrum=weighted.values,
        omegas=cfg.omegas(),
        pair=weighted.pair,
        frame_index=weighted.frame_index,
    )


def correlation_at(corr: GccCorrelation, tau: float | np.ndarray):
    """Correlation value(s) at real lag(s) ``tau`` seconds.

    Scalar in, float out; array in, array out.
    """
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    weighted = bin_weights(corr.spectrum.shape[0]) * corr.spectrum
    # zero bins (out of band or PHAT-gated) contribute nothing; skip them
    nz = np.flatnonzero(weighted)
    phases = np.exp(1j * np.outer(taus, corr.omegas[nz]))
    values = np.real(phases @ weighted[nz])
    if np.isscalar(tau) or np.ndim(tau) == 0:
        return float(values[0])
    return values


def lag_grid(tau_max: float, resolution: float) -> np.ndarray:
    """Symmetric lag grid 0, +-resolution, ... covering [-tau_max, tau_max]."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    k = int(np.floor(tau_max / resolution))
    return np.arange(-k, k + 1) * resolution


def tdoa_estimate(
    corr: GccCorrelation,
    geom: ArrayGeometry,
    speed_of_sound: float | None = None,
    resolution: float | None = None,
    sample_rate: float | None = None,
) -> TdoaEstimate:
    """Argmax of the correlation over the pair's physical lag range.

    The range is [-d/v, +d/v] with d the inter-mic distance, sampled at
    ``resolution`` (default: a quarter sample period).  Ties break toward the
    smallest |tau|.
    """
    v = geom.speed_of_sound if speed_of_sound is None else speed_of_sound
    if resolution is None:
        if sample_rate is None:
            raise ValueError("give either resolution or sample_rate")
        resolution = 1.0 / (TDOA_RESOLUTION_DIVISOR * sample_rate)
    i, j = corr.pair
    tau_max = geom.pair_distance(i, j) / v
    taus = lag_grid(tau_max, resolution)
    values = correlation_at(corr, taus)
    best = values.max()
    candidates = np.flatnonzero(values == best)
    pick = candidates[np.argmin(np.abs(taus[candidates]))]
    return TdoaEstimate(pair=corr.pair, tau_hat=float(taus[pick]), peak_value=float(best))


def correlation_floor(
    corr: GccCorrelation, tau_max: float, resolution: float
) -> float:
    """Product floor for one pair: FLOOR_RATIO x peak over the lag range.

    Strictly positive even when the whole correlation is non-positive.
    """
    peak = correlation_at(corr, lag_grid(tau_max, resolution)).max()
    if peak <= 0.0:
        return FLOOR_MIN
    return FLOOR_RATIO * float(peak)


def mcc_phat_score(
    correlations: Sequence[GccCorrelation],
    delays: np.ndarray,
    floors: Sequence[float],
) -> float:
    """Product over pairs of floored correlations at the hypothesized lags.

    ``delays`` are per-mic steering delays; pair (i, j) is evaluated at
    tau_ij = delays[i] - delays[j].  Accumulation runs over pairs in sorted
    order, in log domain, so the result is invariant to input ordering and
    does not underflow.
    """
    if not correlations:
        raise ValueError("need at least one pair")
    if len(floors) != len(correlations):
        raise ValueError("one floor per correlation required")
    order = sorted(range(len(correlations)), key=lambda k: correlations[k].pair)
    log_score = 0.0
    for k in order:
        corr = correlations[k]
        i, j = corr.pair
        value = correlation_at(corr, float(delays[i] - delays[j]))
        log_score += np.log(max(value, floors[k]))
    return float(np.exp(log_score))


def mcc_phat_spectrum(
    frame: SpectralFrame,
    geom: ArrayGeometry,
    pairset: PairSet,
    grid: Sequence[Direction],
    cfg: StftConfig,
    resolution: float | None = None,
) -> SpatialSpectrum:
    """MCC-PHAT objective over a DOA grid for one frame; argmax is the estimate."""
    if not grid:
        raise ValueError("grid must be nonempty")
    if resolution is None:
        resolution = 1.0 / (TDOA_RESOLUTION_DIVISOR * cfg.sample_rate)
    v = pairset.speed_of_sound
    delays = steering_matrix(geom, grid, v)  # (num_dirs, num_mics)
    weights = bin_weights(cfg.num_bins)
    omegas = cfg.omegas()
    log_scores = np.zeros(len(grid))
    for i, j in pairset.pairs:
        corr = gcc_correlation(frame, (i, j), cfg)
        tau_max = geom.pair_distance(i, j) / v
        floor = correlation_floor(corr, tau_max, resolution)
        taus = delays[:, i] - delays[:, j]
        values = np.real(np.exp(1j * np.outer(taus, omegas)) @ (weights * corr.spectrum))
        log_scores += np.log(np.maximum(values, floor))
    return SpatialSpectrum(
        grid=tuple(grid),
        scores=np.exp(log_scores),
        frame_index=frame.frame_index,
        method="mccphat",
    )


def mcc_phat_spectra_frames(
    coeffs: np.ndarray,
    frame_indices: np.ndarray,
    geom: ArrayGeometry,
    pairset: PairSet,
    grid: Sequence[Direction],
    cfg: StftConfig,
    resolution: float | None = None,
) -> np.ndarray:
    """Batched MCC-PHAT over many frames at once.

    ``coeffs`` is the stacked STFT (num_frames, num_mics, num_bins); returns
    (len(frame_indices), len(grid)) scores.  Same math as mcc_phat_spectrum,
    restricted to in-band bins (out-of-band bins contribute zero anyway).
    """
    if resolution is None:
        resolution = 1.0 / (TDOA_RESOLUTION_DIVISOR * cfg.sample_rate)
    frame_indices = np.asarray(frame_indices, dtype=int)
    v = pairset.speed_of_sound
    bins = cfg.band_bins()
    omegas = cfg.omegas()[bins]
    weights = bin_weights(cfg.num_bins)[bins]
    delays = steering_matrix(geom, grid, v)  # (dirs, mics)
    scale = cfg.frame_len / cfg.sample_rate
    log_scores = np.zeros((len(grid), len(frame_indices)))
    for i, j in pairset.pairs:
        spectra = scale * coeffs[frame_indices, i][:, bins] * np.conj(
            coeffs[frame_indices, j][:, bins]
        )
        weighted = weights[None, :] * phat_normalize(spectra.T).T  # (frames, bins)
        taus = delays[:, i] - delays[:, j]
        values = np.real(np.exp(1j * np.outer(taus, omegas)) @ weighted.T)
        scan = lag_grid(geom.pair_distance(i, j) / v, resolution)
        peaks = np.real(np.exp(1j * np.outer(scan, omegas)) @ weighted.T).max(axis=0)
        floors = np.where(peaks > 0.0, FLOOR_RATIO * peaks, FLOOR_MIN)
        log_scores += np.log(np.maximum(values, floors[None, :]))
    return np.exp(log_scores).T
