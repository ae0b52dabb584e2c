"""Covariance estimation, Hermitian eigendecomposition, and wideband MUSIC.

The eigendecomposition is LAPACK-backed with a deterministic post-pass:
eigenvalues are reported in descending order and each eigenvector's phase is
fixed by rotating its largest-magnitude entry onto the positive real axis, so
repeated runs on identical input give bit-identical results.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConvergenceFailure, EmptyWindow, InvalidSourceCount
from .geometry import ArrayGeometry, Direction, steering_matrix
from .mccphat import SpatialSpectrum
from .spectral import SpectralFrame, StftConfig

log = logging.getLogger(__name__)

# Guard on the noise-subspace projection, per matrix dimension.
MUSIC_GUARD = 1e-12


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """Spatial covariance at one bin, symmetrized to exact Hermitian form."""

    matrix: np.ndarray
    frames_averaged: int


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    eigenvalues: np.ndarray  # real, descending
    eigenvectors: np.ndarray  # column k pairs with eigenvalues[k]


@dataclass(frozen=True, eq=False)
class SubspaceSplit:
    signal: np.ndarray  # (num_mics, num_sources)
    noise: np.ndarray  # (num_mics, num_mics - num_sources)
    num_sources: int


@dataclass(frozen=True)
class MusicConfig:
    """Everything music_wideband needs besides the frames themselves."""

    stft: StftConfig
    geometry: ArrayGeometry
    num_sources: int = 1
    speed_of_sound: float | None = None  # None: use the geometry's value

    @property
    def wave_speed(self) -> float:
        return (
            self.geometry.speed_of_sound
            if self.speed_of_sound is None
            else self.speed_of_sound
        )


def covariance(
    frames: Sequence[SpectralFrame],
    bin_index: int,
    window: Sequence[int] | None = None,
) -> CovarianceEstimate:
    """Average of X X^H over the frame window at one bin, symmetrized."""
    indices = range(len(frames)) if window is None else list(window)
    snapshots = [frames[k].coeffs[:, bin_index] for k in indices]
    if not snapshots:
        raise EmptyWindow("covariance window is empty")
    x = np.stack(snapshots)  # (num_frames, num_mics)
    r = (x.T @ np.conj(x)) / len(snapshots)
    r = 0.5 * (r + np.conj(r.T))
    return CovarianceEstimate(matrix=r, frames_averaged=len(snapshots))


def hermitian_eig(estimate: CovarianceEstimate | np.ndarray) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix, descending eigenvalues.

    Deterministic: eigenvector phases are fixed (largest-magnitude entry made
    real positive) and equal eigenvalues keep the solver's stable order.
    Raises ConvergenceFailure when the solver gives up (pathological input).
    """
    matrix = (
        estimate.matrix
        if isinstance(estimate, CovarianceEstimate)
        else np.asarray(estimate)
    )
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("square matrix required")
    scale = np.linalg.norm(matrix)
    if scale > 0 and np.linalg.norm(matrix - np.conj(matrix.T)) > 1e-8 * scale:
        raise ValueError("matrix is not Hermitian")
    try:
        values, vectors = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    values = values[::-1].copy()
    vectors = vectors[:, ::-1]
    return EigenDecomposition(eigenvalues=values, eigenvectors=_fix_phases(vectors))


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    anchor_rows = np.argmax(np.abs(vectors), axis=-2)
    anchors = np.take_along_axis(vectors, anchor_rows[..., None, :], axis=-2)
    return vectors * np.conj(anchors / np.abs(anchors))


def split_subspace(eig: EigenDecomposition, num_sources: int) -> SubspaceSplit:
    """First num_sources eigenvector columns span signal, the rest noise."""
    num_mics = eig.eigenvectors.shape[0]
    if not (1 <= num_sources < num_mics):
        raise InvalidSourceCount(
            f"num_sources must be in [1, {num_mics - 1}], got {num_sources}"
        )
    return SubspaceSplit(
        signal=eig.eigenvectors[:, :num_sources],
        noise=eig.eigenvectors[:, num_sources:],
        num_sources=num_sources,
    )


def music_narrowband(d: np.ndarray, noise_basis: np.ndarray) -> float:
    """1 / ||E_N^H d||^2, capped when d falls inside the signal subspace."""
    projection = noise_basis.conj().T @ d
    power = float(np.real(np.vdot(projection, projection)))
    guard = MUSIC_GUARD * d.shape[0]
    return 1.0 / max(power, guard)


def music_wideband(
    frames: Sequence[SpectralFrame],
    grid: Sequence[Direction],
    cfg: MusicConfig,
    frame_index: int | None = None,
) -> SpatialSpectrum:
    """Wideband MUSIC objective: narrowband scores summed over retained bins.

    Per bin: covariance over all given frames, eigendecomposition, noise
    subspace of order num_mics - num_sources, then one narrowband score per
    grid direction.  Bins whose eigendecomposition fails are skipped (logged),
    never aborting the frame.  Summation runs over bins in ascending order.
    """
    if not grid:
        raise ValueError("grid must be nonempty")
    if not frames:
        raise EmptyWindow("music_wideband needs at least one frame")
    num_mics = frames[0].num_channels
    if not (1 <= cfg.num_sources < num_mics):
        raise InvalidSourceCount(
            f"num_sources must be in [1, {num_mics - 1}], got {cfg.num_sources}"
        )
    delays = steering_matrix(cfg.geometry, grid, cfg.wave_speed)
    omegas = cfg.stft.omegas()
    guard = MUSIC_GUARD * num_mics
    scores = np.zeros(len(grid))
    for bin_index in cfg.stft.band_bins():
        r = covariance(frames, int(bin_index))
        try:
            eig = hermitian_eig(r)
        except ConvergenceFailure as exc:
            log.warning("skipping bin %d: %s", bin_index, exc)
            continue
        noise = split_subspace(eig, cfg.num_sources).noise
        # exp(-j w tau): (num_dirs, num_mics) conjugate-transposed per direction
        steering = np.exp(-1j * omegas[bin_index] * delays)
        projections = steering.conj() @ noise  # (num_dirs, num_noise)
        power = np.sum(np.abs(projections) ** 2, axis=1)
        scores += 1.0 / np.maximum(power, guard)
    if frame_index is None:
        frame_index = frames[len(frames) // 2].frame_index
    return SpatialSpectrum(
        grid=tuple(grid), scores=scores, frame_index=frame_index, method="music"
    )


def music_spectra_blocks(
    coeffs: np.ndarray,
    output_frames: np.ndarray,
    block: int,
    grid: Sequence[Direction],
    cfg: MusicConfig,
) -> np.ndarray:
    """Batched wideband MUSIC over many output frames.

    ``coeffs`` is the stacked STFT, (num_frames, num_mics, num_bins); each
    output frame k is scored from the covariance of the block of up to
    ``block`` frames centered on it (clipped at the ends of the recording).
    Returns (len(output_frames), len(grid)) scores.  Same math as
    music_wideband, with the noise-subspace power obtained through the
    unitary complement (||d||^2 - ||E_S^H d||^2).
    """
    num_frames, num_mics, _ = coeffs.shape
    if not (1 <= cfg.num_sources < num_mics):
        raise InvalidSourceCount(
            f"num_sources must be in [1, {num_mics - 1}], got {cfg.num_sources}"
        )
    if block < 1:
        raise ValueError("block must be >= 1")
    bins = cfg.stft.band_bins()
    output_frames = np.asarray(output_frames, dtype=int)
    # block centered on the output frame, clipped at the recording ends
    lo = np.clip(output_frames - block // 2, 0, num_frames - 1)
    hi = np.clip(lo + block, 1, num_frames)

    # Outer products per (frame, bin), then windowed sums via a cumulative sum.
    x = coeffs[:, :, bins].transpose(0, 2, 1)  # (frames, bins, mics)
    outer = x[..., :, None] * np.conj(x[..., None, :])
    csum = np.zeros((num_frames + 1,) + outer.shape[1:], dtype=outer.dtype)
    np.cumsum(outer, axis=0, out=csum[1:])
    windows = (csum[hi] - csum[lo]) / (hi - lo)[:, None, None, None]
    windows = 0.5 * (windows + np.conj(windows.transpose(0, 1, 3, 2)))

    try:
        _, vectors = np.linalg.eigh(windows)  # ascending per (frame, bin)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    signal = vectors[..., num_mics - cfg.num_sources :]  # top num_sources columns

    delays = steering_matrix(cfg.geometry, grid, cfg.wave_speed)
    omegas = cfg.stft.omegas()
    guard = MUSIC_GUARD * num_mics
    scores = np.zeros((len(output_frames), len(grid)))
    for b, bin_index in enumerate(bins):
        steering = np.exp(-1j * omegas[bin_index] * delays)  # (dirs, mics)
        # (frames, sources, mics) @ (mics, dirs) -> (frames, sources, dirs)
        proj = signal[:, b].conj().transpose(0, 2, 1) @ steering.T
        power = num_mics - np.sum(np.abs(proj) ** 2, axis=1)
        scores += 1.0 / np.maximum(power, guard)
    return scores
