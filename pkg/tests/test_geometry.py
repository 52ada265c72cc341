import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from layoutslam.geometry import (
    Axis,
    CorrespondenceEdge,
    Rect,
    SegmentObservation,
    camera_to_aligned,
    overlap_ratio,
    wrap_pi,
    wrap_yaw,
)

coord = st.floats(-50, 50, allow_nan=False)


@st.composite
def rects(draw):
    u0, v0 = draw(coord), draw(coord)
    return Rect(u0, u0 + draw(st.floats(0.01, 10)), v0, v0 + draw(st.floats(0.01, 10)))


class TestAxis:
    def test_parse(self):
        assert Axis.parse("x") == Axis.X
        assert Axis.parse("Z") == Axis.Z
        assert Axis.parse(1) == Axis.Y
        with pytest.raises(ValueError):
            Axis.parse("w")

    def test_inplane(self):
        assert Axis.X.inplane == (1, 2)
        assert Axis.Y.inplane == (0, 2)
        assert Axis.Z.inplane == (0, 1)


class TestRect:
    def test_area_and_intersection(self):
        a, b = Rect(0, 2, 0, 2), Rect(1, 3, 1, 4)
        assert a.area == 4
        assert a.intersection(b) == Rect(1, 2, 1, 2)
        assert a.union(b) == Rect(0, 3, 0, 4)
        assert Rect(0, 1, 0, 1).intersection(Rect(1, 2, 0, 1)) is None

    def test_overlap_ratio_uses_smaller_area(self):
        assert overlap_ratio(Rect(0, 10, 0, 10), Rect(1, 2, 1, 2)) == 1.0
        assert overlap_ratio(Rect(0, 1, 0, 1), Rect(5, 6, 5, 6)) == 0.0
        assert overlap_ratio(Rect(0, 2, 0, 1), Rect(1, 3, 0, 1)) == pytest.approx(0.5)

    @given(rects(), rects())
    def test_overlap_ratio_symmetric_and_bounded(self, a, b):
        r = overlap_ratio(a, b)
        assert 0.0 <= r <= 1.0 + 1e-12
        assert r == pytest.approx(overlap_ratio(b, a))

    @given(rects(), coord, coord)
    def test_shift_preserves_area(self, r, du, dv):
        assert r.shifted(du, dv).area == pytest.approx(r.area, rel=1e-6, abs=1e-6)

    def test_list_round_trip(self):
        r = Rect(0.5, 1.5, -2.0, 3.0)
        assert Rect.from_list(r.to_list()) == r


class TestAngles:
    @given(st.floats(-100, 100))
    def test_wrap_ranges(self, a):
        w = wrap_yaw(a)
        assert 0.0 <= w < 2 * math.pi
        p = wrap_pi(a)
        assert -math.pi <= p < math.pi
        assert math.cos(p) == pytest.approx(math.cos(a), abs=1e-9)

    @given(st.floats(-10, 10))
    def test_camera_rotation_is_proper(self, yaw):
        R = camera_to_aligned(yaw)
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0)
        # optical axis is horizontal along the heading, image y points down
        assert np.allclose(R @ [0, 0, 1], [math.cos(yaw), math.sin(yaw), 0], atol=1e-12)
        assert np.allclose(R @ [0, 1, 0], [0, 0, -1])


class TestSerialization:
    def test_segment_round_trip(self):
        s = SegmentObservation(3, Axis.Y, -1.25, 1, Rect(0, 1, 2, 3), 77, 12, source_plane=4)
        assert SegmentObservation.from_dict(s.to_dict()) == s

    def test_edge_round_trip(self):
        e = CorrespondenceEdge(1, 2, Axis.Z, "hypothesis")
        assert CorrespondenceEdge.from_dict(e.to_dict()) == e
