import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgr.equalarea import sphere_to_square, square_to_sphere, uniform_grid


class TestForward:
    def test_center_maps_to_north_pole(self):
        assert np.allclose(square_to_sphere([0.5, 0.5]), [0, 0, 1], atol=1e-15)

    def test_corner_maps_to_south_pole(self):
        for corner in ([0, 0], [0, 1], [1, 0], [1, 1]):
            assert np.allclose(square_to_sphere(corner), [0, 0, -1], atol=1e-15)

    def test_hand_evaluated_point(self):
        # (0.75, 0.5): u = 0.5, v = 0 -> r = 0.5, phi = 0,
        # x = 0.5 * sqrt(2 - 0.25), z = 1 - 0.25.
        got = square_to_sphere([0.75, 0.5])
        assert np.allclose(got, [0.5 * np.sqrt(1.75), 0.0, 0.75], atol=1e-12)

    def test_outputs_unit_norm(self, rng):
        pts = square_to_sphere(rng.random((20000, 2)))
        assert np.abs(np.linalg.norm(pts, axis=1) - 1.0).max() <= 1e-12

    def test_inner_diamond_is_northern_hemisphere(self, rng):
        st_pts = rng.random((5000, 2))
        uv = 2.0 * st_pts - 1.0
        inner = np.abs(uv).sum(axis=1) <= 1.0
        z = square_to_sphere(st_pts)[:, 2]
        assert np.all(z[inner] >= -1e-12)
        assert np.all(z[~inner] <= 1e-12)

    def test_continuity_across_diagonal_seam(self, rng):
        # Points straddling |u| + |v| = 1 at square distance delta stay
        # within C * delta on the sphere.
        t = rng.random(2000) * 0.8 + 0.1
        delta = 1e-7
        inner = np.stack([t, 1.0 - t - delta], axis=1) * 0.5 + 0.5
        outer = np.stack([t, 1.0 - t + delta], axis=1) * 0.5 + 0.5
        d = np.linalg.norm(
            square_to_sphere(inner) - square_to_sphere(outer), axis=1
        )
        assert d.max() <= 100.0 * delta

    def test_continuity_across_axis_seam(self, rng):
        t = rng.random(2000) * 0.8 + 0.1
        delta = 1e-7
        left = np.stack([np.full_like(t, 0.5 - delta), t], axis=1)
        right = np.stack([np.full_like(t, 0.5 + delta), t], axis=1)
        d = np.linalg.norm(
            square_to_sphere(left) - square_to_sphere(right), axis=1
        )
        assert d.max() <= 100.0 * delta


class TestInverse:
    def test_pole_to_center(self):
        assert np.allclose(sphere_to_square([0, 0, 1]), [0.5, 0.5], atol=1e-15)

    def test_south_pole_canonical_corner(self):
        assert np.allclose(sphere_to_square([0, 0, -1]), [1.0, 1.0], atol=1e-15)

    def test_round_trip_interior(self, rng):
        st_pts = rng.random((50000, 2)) * 0.998 + 0.001
        back = sphere_to_square(square_to_sphere(st_pts))
        assert np.abs(back - st_pts).max() <= 1e-9

    def test_inverse_then_forward(self, rng):
        xyz = rng.standard_normal((20000, 3))
        xyz /= np.linalg.norm(xyz, axis=1, keepdims=True)
        again = square_to_sphere(sphere_to_square(xyz))
        assert np.abs(again - xyz).max() <= 1e-9

    @given(
        st.floats(min_value=0.01, max_value=0.99),
        st.floats(min_value=0.01, max_value=0.99),
    )
    @settings(max_examples=200, deadline=None)
    def test_round_trip_property(self, s, t):
        back = sphere_to_square(square_to_sphere([s, t]))
        assert np.abs(back - [s, t]).max() <= 1e-9


class TestUniformGrid:
    def test_r2_enumeration(self):
        grid = uniform_grid(2)
        assert grid.sample_count == 4
        # Sample (1, 1) is (0.5, 0.5) -> north pole; (2, 2) -> south pole.
        expected = {
            (1, 1): [0, 0, 1],
            (2, 2): [0, 0, -1],
        }
        for (i, j), xyz in expected.items():
            k = np.flatnonzero((grid.ij == [i, j]).all(axis=1))[0]
            assert np.allclose(grid.sphere[k], xyz, atol=1e-15)

    def test_unit_norm(self):
        grid = uniform_grid(17)
        assert np.abs(np.linalg.norm(grid.sphere, axis=1) - 1.0).max() <= 1e-12

    def test_weld_index_consistency(self):
        grid = uniform_grid(32)
        rep = grid.distinct_sphere[grid.weld_index]
        assert np.linalg.norm(rep - grid.sphere, axis=1).max() <= 1e-12
        assert grid.distinct_count <= grid.sample_count

    def test_resolution_too_small(self):
        with pytest.raises(ValueError):
            uniform_grid(1)


class TestAreaPreservation:
    def test_fractional_area_monte_carlo(self, rng):
        # Spherical area of a rectangle's image is 4*pi*a: estimated by
        # inverse-mapping uniform sphere samples and counting hits.
        xyz = rng.standard_normal((200000, 3))
        xyz /= np.linalg.norm(xyz, axis=1, keepdims=True)
        st_pts = sphere_to_square(xyz)
        for _ in range(10):
            lo = rng.random(2) * 0.5
            hi = lo + 0.3 + rng.random(2) * 0.2
            hi = np.minimum(hi, 1.0)
            area = np.prod(hi - lo)
            hits = np.all((st_pts >= lo) & (st_pts <= hi), axis=1).mean()
            assert abs(hits - area) / area <= 2e-2
