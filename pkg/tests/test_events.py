import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evline.events import (
    ClusterParams,
    cluster_at,
    cluster_sequence,
    downsample,
    to_spacetime_points,
)

from conftest import make_cluster, make_stream


def brute_force_cluster(stream, t, n):
    """Independent oracle: rank every event by (|dt|, t, y, x, p)."""
    dt = np.abs(stream.t - t)
    order = np.lexsort((stream.p, stream.x, stream.y, stream.t, dt))
    return np.sort(order[: min(n, len(stream))])


class TestClusterAt:
    def test_nearest_in_time_selection(self):
        stream = make_stream([0, 10, 20, 30, 40, 50], [0] * 6, [0] * 6, [1] * 6)
        c = cluster_at(stream, 25, 2)
        assert list(c.t) == [20, 30]
        assert not c.short

    def test_short_flag_at_boundary(self):
        stream = make_stream([0, 10, 20], [0] * 3, [0] * 3, [1] * 3)
        c = cluster_at(stream, 0, 5)
        assert len(c) == 3 and c.short

    def test_matches_brute_force_on_random_stream(self, rng):
        n_events = 10_000
        t = np.sort(rng.integers(0, 1_000_000, size=n_events))
        x = rng.integers(0, 640, size=n_events).astype(float)
        y = rng.integers(0, 480, size=n_events).astype(float)
        p = rng.choice([-1, 1], size=n_events)
        stream = make_stream(t, x, y, p)
        for t_query in rng.integers(0, 1_000_000, size=20):
            c = cluster_at(stream, int(t_query), 100)
            expect = brute_force_cluster(stream, int(t_query), 100)
            got = np.column_stack([c.t, c.x, c.y, c.p])
            want = np.column_stack([stream.t[expect], stream.x[expect], stream.y[expect], stream.p[expect]])
            assert np.array_equal(got, want)

    def test_sorted_by_timestamp(self, rng):
        t = np.sort(rng.integers(0, 10_000, size=500))
        stream = make_stream(t, np.zeros(500), np.zeros(500), np.ones(500))
        c = cluster_at(stream, 5_000, 100)
        assert np.all(np.diff(c.t) >= 0)

    def test_selection_optimality(self, rng):
        """Max time distance inside the cluster <= distance of every excluded event."""
        t = np.sort(rng.integers(0, 10_000, size=300))
        stream = make_stream(t, np.arange(300) % 640, np.zeros(300), np.ones(300))
        t_query = 4321
        c = cluster_at(stream, t_query, 50)
        inside = set(map(tuple, np.column_stack([c.t, c.x])))
        max_in = max(abs(int(tv) - t_query) for tv in c.t)
        for i in range(len(stream)):
            if (stream.t[i], stream.x[i]) not in inside:
                assert abs(int(stream.t[i]) - t_query) >= max_in

    @settings(max_examples=30, deadline=None)
    @given(st.randoms(use_true_random=False))
    def test_permutation_invariance_within_equal_timestamps(self, pyrandom):
        # Many events share timestamps; input order within a timestamp must not matter.
        base = [(t, x, y, 1) for t in (0, 100, 100, 100, 200, 200) for x in (3, 1, 7) for y in (2, 5)]
        pyrandom.shuffle(base)
        base.sort(key=lambda e: e[0])
        t, x, y, p = zip(*base)
        stream = make_stream(t, x, y, p)
        c = cluster_at(stream, 100, 7)
        ref = brute_force_cluster(stream, 100, 7)
        assert np.array_equal(
            np.column_stack([c.t, c.x, c.y]),
            np.column_stack([stream.t[ref], stream.x[ref], stream.y[ref]]),
        )

    def test_empty_stream_rejected(self):
        stream = make_stream([], [], [], [])
        with pytest.raises(ValueError, match="empty stream"):
            cluster_at(stream, 0, 10)


class TestClusterSequence:
    def test_one_second_stream_gives_100_clusters(self, rng):
        n = 5000
        t = np.sort(rng.integers(0, 1_000_000, size=n))
        t[0], t[-1] = 0, 999_999
        stream = make_stream(t, np.zeros(n), np.zeros(n), np.ones(n))
        clusters = cluster_sequence(stream, ClusterParams(n=100, delta_t_us=10_000), t0=0)
        assert len(clusters) == 100

    def test_interval_longer_than_stream(self):
        stream = make_stream([0, 10, 20], [0] * 3, [0] * 3, [1] * 3)
        clusters = cluster_sequence(stream, ClusterParams(n=2, delta_t_us=1_000_000), t0=0)
        assert len(clusters) == 1

    def test_each_cluster_equals_cluster_at(self, rng):
        n = 2000
        t = np.sort(rng.integers(0, 200_000, size=n))
        stream = make_stream(t, rng.integers(0, 640, n), rng.integers(0, 480, n), np.ones(n))
        params = ClusterParams(n=150, delta_t_us=20_000)
        for c in cluster_sequence(stream, params, t0=int(stream.t_first)):
            ref = cluster_at(stream, c.center_time, params.n)
            assert np.array_equal(c.t, ref.t)
            assert np.array_equal(c.x, ref.x)
            assert np.array_equal(c.y, ref.y)

    def test_t0_outside_span_rejected(self):
        stream = make_stream([0, 10], [0, 0], [0, 0], [1, 1])
        with pytest.raises(ValueError):
            cluster_sequence(stream, ClusterParams(n=1, delta_t_us=5), t0=100)


class TestDownsample:
    def test_stride_four(self, rng):
        c = make_cluster(np.arange(4000), np.zeros(4000), np.zeros(4000))
        assert len(downsample(c, 4)) == 1000

    def test_identity(self):
        c = make_cluster([0, 1, 2], [1, 2, 3], [4, 5, 6])
        d = downsample(c, 1)
        assert np.array_equal(d.t, c.t) and np.array_equal(d.x, c.x)

    def test_retained_index_set(self, rng):
        n, k = 1003, 7
        c = make_cluster(np.arange(n), np.arange(n) % 640, np.zeros(n))
        d = downsample(c, k)
        assert np.array_equal(d.x, (np.arange(0, n, k) % 640).astype(float))

    def test_zero_stride_rejected(self):
        c = make_cluster([0], [0], [0])
        with pytest.raises(ValueError):
            downsample(c, 0)


class TestSpacetimePoints:
    def test_earliest_event_at_zero_depth(self):
        c = make_cluster([500, 700], [5, 9], [7, 3])
        pts = to_spacetime_points(c, 1000.0)
        assert np.allclose(pts[0], [5, 7, 0.0])

    def test_direct_substitution(self):
        c = make_cluster([0, 5000], [1, 2], [3, 4])
        pts = to_spacetime_points(c, 1000.0)
        assert pts[1, 2] == pytest.approx(5.0)

    def test_doubling_cz_halves_depth(self, rng):
        t = np.sort(rng.integers(0, 10_000, size=50))
        c = make_cluster(t, rng.integers(0, 640, 50), rng.integers(0, 480, 50))
        a = to_spacetime_points(c, 1000.0)
        b = to_spacetime_points(c, 2000.0)
        assert np.allclose(a[:, 2], 2 * b[:, 2])

    def test_preserves_pixel_coordinates(self, rng):
        t = np.sort(rng.integers(0, 10_000, size=50))
        x = rng.integers(0, 640, 50).astype(float)
        y = rng.integers(0, 480, 50).astype(float)
        c = make_cluster(t, x, y)
        pts = to_spacetime_points(c, 123.0)
        assert np.array_equal(pts[:, 0], x) and np.array_equal(pts[:, 1], y)

    def test_invalid_cz_rejected(self):
        c = make_cluster([0], [0], [0])
        with pytest.raises(ValueError):
            to_spacetime_points(c, 0.0)


def test_cluster_params_profiles():
    sim = ClusterParams.simulated_scale()
    assert sim.n == 4000 and sim.delta_t_us == 10_000
    hi = ClusterParams.high_resolution()
    assert hi.n == 20_000 and hi.delta_t_us == 5_000


def test_stream_validation():
    with pytest.raises(ValueError):
        make_stream([10, 0], [0, 0], [0, 0], [1, 1])  # decreasing time
    with pytest.raises(ValueError):
        make_stream([0], [1000], [0], [1])  # x out of range
    with pytest.raises(ValueError):
        make_stream([0], [0], [0], [2])  # bad polarity
