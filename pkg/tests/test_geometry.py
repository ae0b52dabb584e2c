import json

import numpy as np
import pytest

from doakit.errors import EmptyPairSet
from doakit.geometry import (
    ArrayGeometry,
    Direction,
    direction_grid,
    load_geometry,
    save_geometry,
    select_pairs,
    steering_delays,
    steering_matrix,
    steering_vector,
    uniform_circular_array,
    unit_vector,
)


class TestDirection:
    def test_axis_cases(self):
        np.testing.assert_allclose(unit_vector(Direction(0, 0)), [1, 0, 0], atol=1e-15)
        np.testing.assert_allclose(unit_vector(Direction(90, 0)), [0, 1, 0], atol=1e-15)

    def test_oblique_case(self):
        # cos30*cos45 = 0.61237, cos30*sin45 = 0.61237, sin30 = 0.5
        u = unit_vector(Direction(45, 30))
        np.testing.assert_allclose(u, [0.6124, 0.6124, 0.5], atol=1e-4)

    def test_unit_norm_property(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            az = float(rng.uniform(-179.9, 180.0))
            d = Direction(az, float(rng.uniform(-90, 90)))
            assert abs(np.linalg.norm(unit_vector(d)) - 1.0) <= 1e-12

    @pytest.mark.parametrize("az,el", [(-180.0, 0.0), (200.0, 0.0), (0.0, 91.0)])
    def test_bounds_rejected(self, az, el):
        with pytest.raises(ValueError):
            Direction(az, el)

    def test_boundary_accepted(self):
        Direction(180.0, 90.0)
        Direction(-179.999, -90.0)


class TestArrayGeometry:
    def test_too_few_mics(self):
        with pytest.raises(ValueError):
            ArrayGeometry(np.zeros((1, 3)))

    def test_non_finite(self):
        with pytest.raises(ValueError):
            ArrayGeometry(np.array([[0, 0, 0], [np.nan, 0, 0]]))

    def test_coincident_mics(self):
        with pytest.raises(ValueError):
            ArrayGeometry(np.array([[0, 0, 0], [1e-9, 0, 0]]))

    def test_planar_detection(self):
        assert uniform_circular_array(4, 0.1).is_planar()
        tetra = ArrayGeometry(
            np.array([[0, 0, 0], [0.1, 0, 0], [0, 0.1, 0], [0, 0, 0.1]])
        )
        assert not tetra.is_planar()


class TestSteeringDelays:
    def test_origin_mic_zero_delay(self):
        geom = ArrayGeometry(np.array([[0.0, 0.0, 0.0], [0.1, 0.2, 0.3]]))
        delays = steering_delays(geom, Direction(37.0, -12.0), 343.0)
        assert delays[0] == 0.0

    def test_endfire_pair(self):
        # mics on the +-x axis, wave from +x: tau = (-0.05/343, +0.05/343)
        geom = ArrayGeometry(np.array([[0.05, 0, 0], [-0.05, 0, 0]]))
        delays = steering_delays(geom, Direction(0, 0), 343.0)
        np.testing.assert_allclose(delays, [-0.05 / 343.0, 0.05 / 343.0], rtol=1e-12)

    def test_broadside_pair(self):
        geom = ArrayGeometry(np.array([[0.05, 0, 0], [-0.05, 0, 0]]))
        delays = steering_delays(geom, Direction(90, 0), 343.0)
        np.testing.assert_allclose(delays, [0.0, 0.0], atol=1e-18)

    def test_translation_invariance_of_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            mics = rng.uniform(-0.5, 0.5, size=(5, 3))
            shift = rng.uniform(-10, 10, size=3)
            d = Direction(float(rng.uniform(-179, 180)), float(rng.uniform(-90, 90)))
            a = steering_delays(ArrayGeometry(mics), d, 343.0)
            b = steering_delays(ArrayGeometry(mics + shift), d, 343.0)
            np.testing.assert_allclose(
                a[:, None] - a[None, :], b[:, None] - b[None, :], atol=1e-12
            )

    def test_matrix_matches_single(self, uca8):
        dirs = [Direction(-120.0, 0.0), Direction(15.0, 30.0)]
        mat = steering_matrix(uca8, dirs, 343.0)
        for row, d in zip(mat, dirs):
            np.testing.assert_allclose(row, steering_delays(uca8, d, 343.0), rtol=1e-14)


class TestSteeringVector:
    def test_zero_delays_all_ones(self):
        np.testing.assert_array_equal(
            steering_vector(np.zeros(5), 1234.5), np.ones(5, dtype=complex)
        )

    def test_zero_frequency_all_ones(self):
        rng = np.random.default_rng(3)
        d = rng.uniform(-1e-3, 1e-3, 6)
        np.testing.assert_array_equal(steering_vector(d, 0.0), np.ones(6, complex))

    def test_quarter_period(self):
        f = 500.0
        v = steering_vector(np.array([1.0 / (4 * f)]), 2 * np.pi * f)
        np.testing.assert_allclose(v[0], -1j, atol=1e-12)

    def test_endfire_pair_phases(self):
        tau = np.array([-0.05 / 343.0, 0.05 / 343.0])
        v = steering_vector(tau, 2 * np.pi * 1000.0)
        np.testing.assert_allclose(np.angle(v), [0.9161, -0.9161], atol=1e-3)

    def test_unit_magnitude(self):
        rng = np.random.default_rng(9)
        v = steering_vector(rng.uniform(-1e-3, 1e-3, 64), 2 * np.pi * 3219.0)
        np.testing.assert_allclose(np.abs(v), 1.0, atol=1e-12)

    def test_negative_frequency_rejected(self):
        with pytest.raises(ValueError):
            steering_vector(np.zeros(2), -1.0)


class TestSelectPairs:
    def test_single_pair_below_bound(self):
        geom = ArrayGeometry(np.array([[0, 0, 0], [0.04, 0, 0]]))
        ps = select_pairs(geom, 343.0, 4000.0)  # bound 8.575 cm
        assert ps.pairs == ((0, 1),)

    def test_empty_pair_set(self):
        geom = ArrayGeometry(np.array([[0, 0, 0], [0.04, 0, 0]]))
        with pytest.raises(EmptyPairSet):
            select_pairs(geom, 343.0, 10000.0)  # bound 3.43 cm

    def test_collinear_triple(self):
        geom = ArrayGeometry(np.array([[0, 0, 0], [0.04, 0, 0], [0.16, 0, 0]]))
        ps = select_pairs(geom, 343.0, 4000.0)
        assert ps.pairs == ((0, 1),)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            n = int(rng.integers(3, 10))
            geom = ArrayGeometry(rng.uniform(-0.3, 0.3, size=(n, 3)))
            f_max = float(rng.uniform(500, 12000))
            bound = 343.0 / f_max
            expected = tuple(
                (i, j)
                for i in range(n)
                for j in range(i + 1, n)
                if np.linalg.norm(geom.mics[i] - geom.mics[j]) < bound
            )
            if not expected:
                with pytest.raises(EmptyPairSet):
                    select_pairs(geom, 343.0, f_max)
            else:
                assert select_pairs(geom, 343.0, f_max).pairs == expected


class TestDirectionGrid:
    def test_default_azimuth_coverage(self):
        grid = direction_grid(1.0, 5.0, [0.0])
        azs = [d.azimuth for d in grid]
        assert len(grid) == 360
        assert min(azs) == -179.0 and max(azs) == 180.0

    def test_invalid_step_rejected(self):
        with pytest.raises(ValueError):
            direction_grid(0.0)
        with pytest.raises(ValueError):
            direction_grid(1.0, -5.0)

    def test_elevation_span(self):
        grid = direction_grid(90.0, 45.0)
        els = sorted({d.elevation for d in grid})
        assert els == [-90.0, -45.0, 0.0, 45.0, 90.0]


class TestGeometryFile:
    def test_round_trip(self, tmp_path, uca8):
        path = tmp_path / "geom.json"
        save_geometry(uca8, path)
        back = load_geometry(path)
        np.testing.assert_allclose(back.mics, uca8.mics, rtol=1e-12)
        assert back.name == uca8.name
        assert back.speed_of_sound == uca8.speed_of_sound

    def test_missing_mics_key(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"name": "x"}))
        with pytest.raises(ValueError):
            load_geometry(path)

    def test_default_speed(self, tmp_path):
        path = tmp_path / "g.json"
        path.write_text(json.dumps({"mics": [[0, 0, 0], [0.1, 0, 0]]}))
        assert load_geometry(path).speed_of_sound == 343.0
