import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bevmotion.geometry import (
    AtCtError,
    OrientedBox,
    Trajectory,
    Waypoint,
    box_corners,
    decompose_at_ct,
    heading_to_sincos,
    monte_carlo_iou,
    normalize_angle,
    rotated_iou,
    sincos_to_heading,
)

finite_angles = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)


class TestNormalizeAngle:
    def test_identity(self):
        assert normalize_angle(0.0) == 0.0

    def test_three_pi_wraps_to_pi(self):
        assert normalize_angle(3 * math.pi) == pytest.approx(math.pi, abs=1e-12)

    def test_negative_pi_maps_to_pi(self):
        assert normalize_angle(-math.pi) == math.pi

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            normalize_angle(float("nan"))
        with pytest.raises(ValueError):
            normalize_angle(float("inf"))

    @given(finite_angles)
    def test_range_and_congruence(self, theta):
        w = normalize_angle(theta)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.sin(w), math.sin(theta), abs_tol=1e-9)
        assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)

    @given(finite_angles)
    def test_idempotent(self, theta):
        w = normalize_angle(theta)
        assert normalize_angle(w) == w


class TestBoxCorners:
    def test_unit_square_axis_aligned(self):
        corners = box_corners(OrientedBox(0, 0, 1, 1, 0))
        expected = np.array([[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]])
        np.testing.assert_allclose(corners, expected, atol=1e-15)

    def test_rotated_quarter_turn(self):
        # 2x1 box rotated by pi/2: length axis now along y.
        corners = box_corners(OrientedBox(0, 0, 2, 1, math.pi / 2))
        expected = np.array([[-0.5, 1.0], [-0.5, -1.0], [0.5, -1.0], [0.5, 1.0]])
        np.testing.assert_allclose(corners, expected, atol=1e-12)

    def test_translation_only(self):
        corners = box_corners(OrientedBox(10, 5, 4, 2, 0))
        expected = np.array([[12, 6], [8, 6], [8, 4], [12, 4]], dtype=float)
        np.testing.assert_allclose(corners, expected, atol=1e-12)

    def test_counter_clockwise_order(self):
        corners = box_corners(OrientedBox(3, -2, 5, 2, 0.7))
        x, y = corners[:, 0], corners[:, 1]
        signed = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert signed > 0

    def test_invalid_extent_rejected(self):
        with pytest.raises(ValueError):
            OrientedBox(0, 0, 0.0, 1, 0)
        with pytest.raises(ValueError):
            OrientedBox(0, 0, 1, -1, 0)


class TestRotatedIou:
    def test_identical_boxes(self):
        a = OrientedBox(1.0, -2.0, 4.0, 2.0, 0.3)
        b = OrientedBox(1.0, -2.0, 4.0, 2.0, 0.3)
        assert rotated_iou(a, b) == 1.0

    def test_heading_flip_invariant(self):
        a = OrientedBox(1.0, -2.0, 4.0, 2.0, 0.3)
        b = OrientedBox(1.0, -2.0, 4.0, 2.0, normalize_angle(0.3 + math.pi))
        assert rotated_iou(a, b) == pytest.approx(1.0, abs=1e-12)

    def test_hand_computed_offset_squares(self):
        # Two 2x2 squares offset by (1, 0): overlap 2, union 6.
        a = OrientedBox(0, 0, 2, 2, 0)
        b = OrientedBox(1, 0, 2, 2, 0)
        assert rotated_iou(a, b) == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_disjoint(self):
        a = OrientedBox(0, 0, 2, 2, 0.1)
        b = OrientedBox(100, 0, 2, 2, -0.4)
        assert rotated_iou(a, b) == 0.0

    def test_edge_contact_is_zero(self):
        a = OrientedBox(0, 0, 2, 2, 0)
        b = OrientedBox(2, 0, 2, 2, 0)
        assert rotated_iou(a, b) == pytest.approx(0.0, abs=1e-12)

    def _random_box(self, rng):
        return OrientedBox(
            cx=rng.uniform(-5, 5),
            cy=rng.uniform(-5, 5),
            length=rng.uniform(0.5, 6.0),
            width=rng.uniform(0.5, 4.0),
            heading=rng.uniform(-math.pi, math.pi),
        )

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            a, b = self._random_box(rng), self._random_box(rng)
            iou_ab = rotated_iou(a, b)
            iou_ba = rotated_iou(b, a)
            assert iou_ab == iou_ba
            assert 0.0 <= iou_ab <= 1.0

    def test_monte_carlo_oracle_smoke(self):
        # Full 100-pair / 1e6-sample run lives in the acceptance suite.
        rng = np.random.default_rng(11)
        for _ in range(10):
            a, b = self._random_box(rng), self._random_box(rng)
            exact = rotated_iou(a, b)
            approx = monte_carlo_iou(a, b, 200_000, rng)
            assert abs(exact - approx) < 5e-3


class TestDecomposeAtCt:
    def test_identity_frame(self):
        err = decompose_at_ct(Waypoint(3, 4, 0), Waypoint(0, 0, 0))
        assert err.at == pytest.approx(3.0)
        assert err.ct == pytest.approx(4.0)

    def test_quarter_turn_frame(self):
        err = decompose_at_ct(Waypoint(3, 4, 0), Waypoint(0, 0, math.pi / 2))
        assert err.at == pytest.approx(4.0)
        assert err.ct == pytest.approx(-3.0)

    def test_zero_displacement(self):
        err = decompose_at_ct(Waypoint(1, 2, 0.5), Waypoint(1, 2, 1.2))
        assert err.at == 0.0 and err.ct == 0.0

    def test_positive_ct_means_left(self):
        # Truth heading +x; predicted displaced toward +y (left).
        err = decompose_at_ct(Waypoint(0, 1, 0), Waypoint(0, 0, 0))
        assert err.ct > 0

    @given(
        st.floats(-10, 10), st.floats(-10, 10), finite_angles,
        st.floats(-10, 10), st.floats(-10, 10),
    )
    def test_isometry(self, tx, ty, heading, px, py):
        err = decompose_at_ct(Waypoint(px, py, 0.0), Waypoint(tx, ty, heading))
        disp_sq = (px - tx) ** 2 + (py - ty) ** 2
        assert math.isclose(err.at**2 + err.ct**2, disp_sq, rel_tol=1e-9, abs_tol=1e-12)

    @given(
        st.floats(-10, 10), st.floats(-10, 10), finite_angles,
        st.floats(-10, 10), st.floats(-10, 10), finite_angles,
        st.floats(-5, 5), st.floats(-5, 5),
    )
    @settings(max_examples=60)
    def test_rigid_transform_invariance(self, tx, ty, th, px, py, phi, ox, oy):
        def rot(x, y):
            c, s = math.cos(phi), math.sin(phi)
            return (c * (x - ox) - s * (y - oy) + ox, s * (x - ox) + c * (y - oy) + oy)

        base = decompose_at_ct(Waypoint(px, py, 0.0), Waypoint(tx, ty, th))
        px2, py2 = rot(px, py)
        tx2, ty2 = rot(tx, ty)
        moved = decompose_at_ct(
            Waypoint(px2, py2, 0.0), Waypoint(tx2, ty2, normalize_angle(th + phi))
        )
        assert math.isclose(base.at, moved.at, rel_tol=1e-9, abs_tol=1e-9)
        assert math.isclose(base.ct, moved.ct, rel_tol=1e-9, abs_tol=1e-9)


class TestSinCos:
    def test_zero(self):
        assert heading_to_sincos(0.0) == (0.0, 1.0)

    def test_quarter(self):
        s, c = heading_to_sincos(math.pi / 2)
        assert s == pytest.approx(1.0)
        assert c == pytest.approx(0.0, abs=1e-15)

    def test_round_trip(self):
        assert sincos_to_heading(*heading_to_sincos(2.5)) == pytest.approx(2.5, abs=1e-12)

    def test_unnormalized_pair(self):
        assert sincos_to_heading(2.0, 2.0) == pytest.approx(math.pi / 4)

    def test_zero_pair_rejected(self):
        with pytest.raises(ValueError):
            sincos_to_heading(0.0, 0.0)

    @given(finite_angles)
    def test_round_trip_property(self, theta):
        s, c = heading_to_sincos(theta)
        assert math.isclose(
            sincos_to_heading(s, c), normalize_angle(theta), abs_tol=1e-12
        )


class TestTrajectoryTypes:
    def test_heading_normalized_on_construction(self):
        assert Waypoint(0, 0, 3 * math.pi).heading == pytest.approx(math.pi)

    def test_trajectory_requires_waypoints(self):
        with pytest.raises(ValueError):
            Trajectory(waypoints=(), horizon_dt=0.1)
        with pytest.raises(ValueError):
            Trajectory(waypoints=(Waypoint(0, 0, 0),), horizon_dt=0.0)

    def test_centers_and_headings_arrays(self):
        traj = Trajectory((Waypoint(1, 2, 0.1), Waypoint(3, 4, 0.2)), 0.1)
        np.testing.assert_allclose(traj.centers(), [[1, 2], [3, 4]])
        np.testing.assert_allclose(traj.headings(), [0.1, 0.2])

    def test_atct_norm(self):
        assert AtCtError(3.0, 4.0).norm == pytest.approx(5.0)
