import numpy as np
import pytest
from hypothesis import given, strategies as st

from crushsim.geometry import (
    closest_point_on_segment,
    distance_to_segment,
    hash_direction,
    perp,
    polygon_contains,
    polygon_edges,
    segment_length,
    segments_cross,
    stable_hash_u64,
    unit,
    vec,
)


class TestClosestPoint:
    def test_interior_projection(self):
        a, b = vec(0, 0), vec(10, 0)
        cp = closest_point_on_segment(np.array([[3.0, 4.0]]), a, b)
        assert np.allclose(cp, [[3.0, 0.0]])

    def test_clamps_to_endpoints(self):
        a, b = vec(0, 0), vec(10, 0)
        cp = closest_point_on_segment(np.array([[-5.0, 2.0], [15.0, -2.0]]), a, b)
        assert np.allclose(cp, [[0.0, 0.0], [10.0, 0.0]])

    def test_degenerate_segment_returns_endpoint(self):
        a = vec(2, 3)
        cp = closest_point_on_segment(np.array([[7.0, 7.0]]), a, a.copy())
        assert np.allclose(cp, [[2.0, 3.0]])

    def test_vectorized_shape(self):
        pts = np.random.default_rng(0).uniform(-5, 5, size=(17, 2))
        cp = closest_point_on_segment(pts, vec(0, 0), vec(1, 1))
        assert cp.shape == (17, 2)

    @given(
        px=st.floats(-50, 50),
        py=st.floats(-50, 50),
        ax=st.floats(-10, 10),
        ay=st.floats(-10, 10),
        bx=st.floats(-10, 10),
        by=st.floats(-10, 10),
    )
    def test_closest_point_beats_endpoints(self, px, py, ax, ay, bx, by):
        p = np.array([[px, py]])
        a, b = vec(ax, ay), vec(bx, by)
        cp = closest_point_on_segment(p, a, b)[0]
        d = np.hypot(*(p[0] - cp))
        assert d <= np.hypot(*(p[0] - a)) + 1e-9
        assert d <= np.hypot(*(p[0] - b)) + 1e-9


class TestDistance:
    def test_perpendicular_distance(self):
        d = distance_to_segment(np.array([[5.0, 3.0]]), vec(0, 0), vec(10, 0))
        assert d[0] == pytest.approx(3.0)

    def test_beyond_endpoint_uses_euclidean(self):
        d = distance_to_segment(np.array([[13.0, 4.0]]), vec(0, 0), vec(10, 0))
        assert d[0] == pytest.approx(5.0)


class TestSegmentsCross:
    def test_plain_crossing(self):
        assert segments_cross(vec(0, 0), vec(2, 2), vec(0, 2), vec(2, 0))

    def test_parallel_disjoint(self):
        assert not segments_cross(vec(0, 0), vec(1, 0), vec(0, 1), vec(1, 1))

    def test_shared_endpoint_counts(self):
        assert segments_cross(vec(0, 0), vec(1, 1), vec(1, 1), vec(2, 0))

    def test_t_touch(self):
        assert segments_cross(vec(0, 0), vec(2, 0), vec(1, -1), vec(1, 0))

    def test_collinear_overlap(self):
        assert segments_cross(vec(0, 0), vec(3, 0), vec(1, 0), vec(5, 0))

    def test_collinear_disjoint(self):
        assert not segments_cross(vec(0, 0), vec(1, 0), vec(2, 0), vec(3, 0))


class TestPolygon:
    SQUARE = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]])

    def test_inside_outside(self):
        inside = polygon_contains(self.SQUARE, np.array([[2.0, 2.0], [5.0, 2.0]]))
        assert inside.tolist() == [True, False]

    def test_nonconvex(self):
        lshape = np.array(
            [[0.0, 0.0], [4.0, 0.0], [4.0, 2.0], [2.0, 2.0], [2.0, 4.0], [0.0, 4.0]]
        )
        pts = np.array([[1.0, 3.0], [3.0, 3.0], [3.0, 1.0]])
        assert polygon_contains(lshape, pts).tolist() == [True, False, True]

    def test_edges_close_the_ring(self):
        edges = polygon_edges(self.SQUARE)
        assert edges.shape == (4, 2, 2)
        assert np.allclose(edges[-1], [[0.0, 4.0], [0.0, 0.0]])


class TestSmallVectorOps:
    def test_perp_rotates_left(self):
        assert np.allclose(perp(vec(1, 0)), [0, 1])
        assert np.allclose(perp(vec(0, 1)), [-1, 0])

    def test_unit_normalizes(self):
        u = unit(vec(3, 4))
        assert np.allclose(u, [0.6, 0.8])

    def test_segment_length(self):
        assert segment_length(np.array([[0.0, 0.0], [3.0, 4.0]])) == pytest.approx(5.0)


class TestStableHash:
    def test_deterministic(self):
        assert stable_hash_u64(1, 2, 3) == stable_hash_u64(1, 2, 3)

    def test_order_sensitive(self):
        assert stable_hash_u64(1, 2) != stable_hash_u64(2, 1)

    def test_u64_range(self):
        for args in [(0,), (1, 2, 3), (2**63, 5)]:
            h = stable_hash_u64(*args)
            assert 0 <= h < 2**64

    def test_hash_direction_is_unit(self):
        for args in [(0, 0, 1, 2), (7, 3, 0, 9)]:
            d = hash_direction(*args)
            assert np.hypot(*d) == pytest.approx(1.0, abs=1e-12)

    def test_hash_direction_deterministic(self):
        assert np.allclose(hash_direction(1, 2, 3), hash_direction(1, 2, 3))
        assert not np.allclose(hash_direction(1, 2, 3), hash_direction(1, 2, 4))
