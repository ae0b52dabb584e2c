import numpy as np
import pytest

from doakit.errors import EmptyWindow, InvalidSourceCount
from doakit.geometry import Direction, direction_grid, steering_delays, steering_vector
from doakit.spectral import SpectralFrame, StftConfig, stft, stft_array
from doakit.subspace import (
    MusicConfig,
    covariance,
    hermitian_eig,
    music_narrowband,
    music_spectra_blocks,
    music_wideband,
    split_subspace,
)
from conftest import make_scene


def frame_of(vector, index=0):
    coeffs = np.zeros((len(vector), 4), complex)
    coeffs[:, 1] = vector
    return SpectralFrame(coeffs=coeffs, frame_index=index, time=float(index))


def random_hermitian(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


class TestCovariance:
    def test_single_snapshot_outer_product(self):
        e1 = np.array([1.0, 0, 0, 0], complex)
        est = covariance([frame_of(e1)], 1)
        expected = np.outer(e1, e1.conj())
        np.testing.assert_allclose(est.matrix, expected, atol=1e-15)
        assert np.linalg.matrix_rank(est.matrix) == 1
        assert est.frames_averaged == 1

    def test_sign_cancels(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        one = covariance([frame_of(x)], 1)
        both = covariance([frame_of(x, 0), frame_of(-x, 1)], 1)
        np.testing.assert_allclose(both.matrix, one.matrix, rtol=1e-12)

    def test_white_noise_approaches_identity(self):
        # 64 snapshots of unit-variance circular noise: entries within 0.35 of I
        rng = np.random.default_rng(123)
        frames = [
            frame_of((rng.standard_normal(4) + 1j * rng.standard_normal(4)) / np.sqrt(2), k)
            for k in range(64)
        ]
        est = covariance(frames, 1)
        assert np.max(np.abs(est.matrix - np.eye(4))) < 0.35

    def test_empty_window(self):
        with pytest.raises(EmptyWindow):
            covariance([], 0)
        with pytest.raises(EmptyWindow):
            covariance([frame_of(np.ones(3, complex))], 1, window=[])

    def test_window_selects_frames(self):
        rng = np.random.default_rng(1)
        frames = [
            frame_of(rng.standard_normal(3) + 1j * rng.standard_normal(3), k)
            for k in range(6)
        ]
        sub = covariance(frames, 1, window=range(2, 5))
        direct = covariance(frames[2:5], 1)
        np.testing.assert_allclose(sub.matrix, direct.matrix, rtol=1e-14)

    def test_linearity_over_concatenation(self):
        rng = np.random.default_rng(2)
        frames = [
            frame_of(rng.standard_normal(4) + 1j * rng.standard_normal(4), k)
            for k in range(10)
        ]
        whole = covariance(frames, 1).matrix
        first = covariance(frames[:4], 1).matrix
        second = covariance(frames[4:], 1).matrix
        weighted = (4 * first + 6 * second) / 10
        np.testing.assert_allclose(whole, weighted, atol=1e-12)

    def test_positive_semidefinite(self):
        rng = np.random.default_rng(3)
        frames = [
            frame_of(rng.standard_normal(5) + 1j * rng.standard_normal(5), k)
            for k in range(3)
        ]
        est = covariance(frames, 1)
        eigenvalues = np.linalg.eigvalsh(est.matrix)
        assert eigenvalues.min() >= -1e-8 * np.trace(est.matrix).real


class TestHermitianEig:
    def test_diagonal(self):
        eig = hermitian_eig(np.diag([3.0, 1.0]).astype(complex))
        np.testing.assert_allclose(eig.eigenvalues, [3.0, 1.0])
        np.testing.assert_allclose(np.abs(eig.eigenvectors), np.eye(2), atol=1e-14)

    def test_two_by_two(self):
        eig = hermitian_eig(np.array([[2.0, 1.0], [1.0, 2.0]], complex))
        np.testing.assert_allclose(eig.eigenvalues, [3.0, 1.0], rtol=1e-12)
        s = 1 / np.sqrt(2)
        np.testing.assert_allclose(eig.eigenvectors[:, 0], [s, s], atol=1e-12)
        np.testing.assert_allclose(eig.eigenvectors[:, 1], [s, -s], atol=1e-12)

    def test_reconstruction_6x6(self):
        rng = np.random.default_rng(4)
        r = random_hermitian(rng, 6)
        eig = hermitian_eig(r)
        rebuilt = eig.eigenvectors @ np.diag(eig.eigenvalues) @ eig.eigenvectors.conj().T
        assert np.linalg.norm(rebuilt - r) <= 1e-8 * np.linalg.norm(r)

    def test_invariants_random_sizes(self):
        rng = np.random.default_rng(5)
        for _ in range(60):
            n = int(rng.integers(2, 13))
            r = random_hermitian(rng, n)
            eig = hermitian_eig(r)
            scale = np.linalg.norm(r)
            assert np.all(np.diff(eig.eigenvalues) <= 1e-12 * max(scale, 1.0))
            v = eig.eigenvectors
            np.testing.assert_allclose(v.conj().T @ v, np.eye(n), atol=1e-8)
            for k in range(n):
                residual = r @ v[:, k] - eig.eigenvalues[k] * v[:, k]
                assert np.linalg.norm(residual) <= 1e-8 * scale

    def test_phase_convention(self):
        rng = np.random.default_rng(6)
        eig = hermitian_eig(random_hermitian(rng, 5))
        for k in range(5):
            col = eig.eigenvectors[:, k]
            anchor = col[np.argmax(np.abs(col))]
            assert anchor.imag == pytest.approx(0.0, abs=1e-12)
            assert anchor.real > 0

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        r = random_hermitian(rng, 8)
        a = hermitian_eig(r)
        b = hermitian_eig(r.copy())
        assert np.array_equal(a.eigenvalues, b.eigenvalues)
        assert np.array_equal(a.eigenvectors, b.eigenvectors)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            hermitian_eig(np.array([[1.0, 2.0], [0.0, 1.0]], complex))

    def test_accepts_covariance_estimate(self):
        est = covariance([frame_of(np.array([1.0, 1j, 0], complex))], 1)
        eig = hermitian_eig(est)
        assert eig.eigenvalues[0] == pytest.approx(2.0)


class TestSplitSubspace:
    def test_partition_shapes(self):
        rng = np.random.default_rng(8)
        eig = hermitian_eig(random_hermitian(rng, 4))
        split = split_subspace(eig, 1)
        assert split.signal.shape == (4, 1)
        assert split.noise.shape == (4, 3)

    def test_noise_orthogonal_to_rank_one_signal(self):
        rng = np.random.default_rng(9)
        a = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        a /= np.linalg.norm(a)
        eig = hermitian_eig(np.outer(a, a.conj()))
        split = split_subspace(eig, 1)
        assert np.linalg.norm(split.noise.conj().T @ a) <= 1e-8
        np.testing.assert_allclose(
            split.signal.conj().T @ split.noise, 0.0, atol=1e-8
        )

    @pytest.mark.parametrize("q", [0, 4, 5])
    def test_invalid_source_count(self, q):
        rng = np.random.default_rng(10)
        eig = hermitian_eig(random_hermitian(rng, 4))
        with pytest.raises(InvalidSourceCount):
            split_subspace(eig, q)


class TestMusicNarrowband:
    def test_noise_column_scores_one(self):
        rng = np.random.default_rng(11)
        eig = hermitian_eig(random_hermitian(rng, 6))
        split = split_subspace(eig, 2)
        d = split.noise[:, 0]
        assert music_narrowband(d, split.noise) == pytest.approx(1.0, rel=1e-9)

    def test_signal_subspace_capped(self):
        # d orthogonal to the noise basis: score capped at 1/(1e-12 * len(d))
        noise = np.zeros((4, 3), complex)
        noise[1:, :] = np.eye(3)
        d = np.array([1.0, 0, 0, 0], complex)
        assert music_narrowband(d, noise) == pytest.approx(1.0 / (1e-12 * 4))

    def test_peak_separation_20db(self, uca8):
        omega = 2 * np.pi * 1500.0
        d40 = steering_vector(steering_delays(uca8, Direction(40.0, 0.0), 343.0), omega)
        eig = hermitian_eig(np.outer(d40, d40.conj()))
        noise = split_subspace(eig, 1).noise
        d50 = steering_vector(steering_delays(uca8, Direction(50.0, 0.0), 343.0), omega)
        score_on = music_narrowband(d40, noise)
        score_off = music_narrowband(d50, noise)
        assert score_on >= 100.0 * score_off


class TestMusicWideband:
    def cfg16(self):
        return StftConfig(
            frame_len=512, hop=256, window="hann", sample_rate=16000.0, band=(300.0, 4000.0)
        )

    def test_single_source_argmax(self, uca8):
        _, signals, _ = make_scene(uca8, 60.0, duration=0.6, snr_db=20.0, seed=21)
        cfg = self.cfg16()
        frames = stft(signals, cfg)
        grid = direction_grid(1.0, 5.0, [0.0])
        spectrum = music_wideband(frames[4:12], grid, MusicConfig(cfg, uca8))
        assert abs(spectrum.argmax_direction().azimuth - 60.0) <= 2.0

    def test_noise_only_is_flatter_than_source(self, uca8):
        cfg = self.cfg16()
        rng = np.random.default_rng(22)
        noise = rng.standard_normal((8, 4096))
        noise_frames = stft(noise, cfg)
        grid = direction_grid(5.0, 5.0, [0.0])
        flat = music_wideband(noise_frames[:8], grid, MusicConfig(cfg, uca8))
        flat_ratio = np.max(flat.scores) / np.median(flat.scores)

        _, signals, _ = make_scene(uca8, -30.0, duration=0.6, snr_db=20.0, seed=23)
        src = music_wideband(stft(signals, cfg)[4:12], grid, MusicConfig(cfg, uca8))
        src_ratio = np.max(src.scores) / np.median(src.scores)
        assert flat_ratio < src_ratio
        assert flat_ratio < 5.0  # regression bound from the first characterization run

    def test_single_direction_grid(self, uca8):
        _, signals, _ = make_scene(uca8, 10.0, duration=0.3, snr_db=20.0, seed=24)
        cfg = self.cfg16()
        frames = stft(signals, cfg)
        only = (Direction(-77.0, 0.0),)
        spectrum = music_wideband(frames[:4], only, MusicConfig(cfg, uca8))
        assert spectrum.argmax_direction() == only[0]

    def test_scale_invariant_argmax(self, uca8):
        # scaling the snapshots scales R but not the eigenvectors
        _, signals, _ = make_scene(uca8, 135.0, duration=0.4, snr_db=10.0, seed=25)
        cfg = self.cfg16()
        grid = direction_grid(3.0, 5.0, [0.0])
        a = music_wideband(stft(signals, cfg)[2:10], grid, MusicConfig(cfg, uca8))
        b = music_wideband(stft(7.3 * signals, cfg)[2:10], grid, MusicConfig(cfg, uca8))
        assert np.argmax(a.scores) == np.argmax(b.scores)

    def test_noiseless_noise_subspace_orthogonality(self, uca8):
        # noiseless rank-one frames: steering vector of the true direction is
        # annihilated by the estimated noise subspace
        cfg = self.cfg16()
        rng = np.random.default_rng(26)
        bin_index = int(cfg.band_bins()[10])
        omega = cfg.omegas()[bin_index]
        delays = steering_delays(uca8, Direction(25.0, 0.0), 343.0)
        d = steering_vector(delays, omega)
        frames = []
        for k in range(8):
            amp = rng.standard_normal() + 1j * rng.standard_normal()
            coeffs = np.zeros((8, cfg.num_bins), complex)
            coeffs[:, bin_index] = amp * d
            frames.append(SpectralFrame(coeffs=coeffs, frame_index=k, time=float(k)))
        est = covariance(frames, bin_index)
        noise = split_subspace(hermitian_eig(est), 1).noise
        assert np.linalg.norm(noise.conj().T @ d) <= 1e-6

    def test_invalid_source_count(self, uca8):
        cfg = self.cfg16()
        frames = stft(np.zeros((8, 1024)), cfg)
        with pytest.raises(InvalidSourceCount):
            music_wideband(frames, direction_grid(90.0, 90.0, [0.0]), MusicConfig(cfg, uca8, 8))

    def test_pathological_bin_is_skipped_not_fatal(self, uca8, caplog):
        # a NaN-poisoned bin fails its eigendecomposition and is excluded;
        # the remaining bins still localize the source
        _, signals, _ = make_scene(uca8, 60.0, duration=0.6, snr_db=20.0, seed=28)
        cfg = self.cfg16()
        frames = stft(signals, cfg)
        poisoned_bin = int(cfg.band_bins()[3])
        for f in frames[4:12]:
            f.coeffs[0, poisoned_bin] = np.nan
        grid = direction_grid(2.0, 5.0, [0.0])
        with caplog.at_level("WARNING", logger="doakit.subspace"):
            spectrum = music_wideband(frames[4:12], grid, MusicConfig(cfg, uca8))
        assert np.all(np.isfinite(spectrum.scores))
        assert abs(spectrum.argmax_direction().azimuth - 60.0) <= 2.0
        assert any("skipping bin" in r.message for r in caplog.records)

    def test_batched_matches_single(self, uca8):
        _, signals, _ = make_scene(uca8, -120.0, duration=0.8, snr_db=15.0, seed=27)
        cfg = self.cfg16()
        coeffs = stft_array(signals, cfg)
        frames = stft(signals, cfg)
        grid = direction_grid(10.0, 5.0, [0.0])
        mcfg = MusicConfig(cfg, uca8)
        out = np.array([6, 17, 30])
        batched = music_spectra_blocks(coeffs, out, 8, grid, mcfg)
        for row, k in enumerate(out):
            lo = max(0, k - 4)
            hi = min(len(frames), lo + 8)
            single = music_wideband(frames[lo:hi], grid, mcfg)
            np.testing.assert_allclose(batched[row], single.scores, rtol=1e-9)
