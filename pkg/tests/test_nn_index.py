import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_nearest_point, brute_nearest_segment, seg_sq
from poisson_coloring.errors import EmptyIndex
from poisson_coloring.nn_index import PointIndex, SegmentIndex, point_segment_distance


@pytest.mark.parametrize("d", [1, 2, 3])
def test_point_index_interleaved_matches_scan(d):
    rng = np.random.default_rng(d)
    ix = PointIndex(d)
    pos, col = [], []
    for i in range(600):
        p = rng.random(d)
        c = int(rng.integers(2))
        ix.insert(p, c, i)
        pos.append(p)
        col.append(c)
        x = rng.random(d)
        for filt in (None, 0, 1):
            want = brute_nearest_point(pos, col, range(len(pos)), x, filt)
            if want is None:
                with pytest.raises(EmptyIndex):
                    ix.nearest(x, filt)
                continue
            assert ix.nearest(x, filt) == want


def test_point_ties_prefer_smallest_id():
    ix = PointIndex(2)
    ix.insert([0.25, 0.5], 1, 7)
    ix.insert([0.75, 0.5], 0, 3)
    assert ix.nearest([0.5, 0.5]) == (3, 0.0625)
    ix2 = PointIndex(2)
    ix2.insert([0.25, 0.5], 1, 1)
    ix2.insert([0.75, 0.5], 0, 4)
    assert ix2.nearest([0.5, 0.5])[0] == 1


def test_empty_index_raises():
    with pytest.raises(EmptyIndex):
        PointIndex(2).nearest([0.5, 0.5])
    with pytest.raises(EmptyIndex):
        SegmentIndex(2).nearest([0.5, 0.5])


def test_nearest_batch_matches_single_queries():
    rng = np.random.default_rng(0)
    pts = rng.random((500, 2))
    ix = PointIndex.from_arrays(pts, rng.integers(0, 2, 500))
    xs = rng.random((200, 2))
    ids, sqs = ix.nearest_batch(xs)
    for x, i, q in zip(xs, ids, sqs):
        assert (int(i), float(q)) == ix.nearest(x)


@pytest.mark.parametrize("d", [2, 3])
def test_segment_index_interleaved_matches_scan(d):
    rng = np.random.default_rng(10 + d)
    ix = SegmentIndex(d)
    sa, sb, col = [], [], []
    for i in range(400):
        a = rng.random(d)
        b = a + rng.normal(scale=0.05, size=d) if i % 5 else a.copy()
        b = np.clip(b, 0, 1)
        c = int(rng.integers(2))
        ix.insert(a, b, c, i)
        sa.append(a)
        sb.append(b)
        col.append(c)
        x = rng.random(d)
        for filt in (None, 0, 1):
            want = brute_nearest_segment(sa, sb, col, range(len(sa)), x, filt)
            if want is None:
                continue
            got = ix.nearest(x, filt)
            assert got[:2] == want
            assert np.allclose(got[2], seg_sq(x, sa[got[0]], sb[got[0]])[1])


def test_point_segment_distance_against_dense_samples():
    rng = np.random.default_rng(5)
    u = np.linspace(0, 1, 100_001)
    for _ in range(20):
        x, a, b = rng.random((3, 2))
        sq, closest = point_segment_distance(x, a, b)
        dense = ((a + u[:, None] * (b - a) - x) ** 2).sum(axis=1).min()
        assert sq <= dense + 1e-15
        assert sq == pytest.approx(dense, abs=1e-9)
        assert np.isclose(((closest - x) ** 2).sum(), sq)


def test_degenerate_segment_projects_to_endpoint():
    sq, c = point_segment_distance([0.5, 0.5], [0.1, 0.1], [0.1, 0.1])
    assert np.array_equal(c, [0.1, 0.1])
    assert sq == pytest.approx(0.32)


coords = st.floats(0.0, 1.0, allow_nan=False)


@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=60),
       st.tuples(coords, coords))
def test_point_index_property(points, query):
    ix = PointIndex(2)
    for i, p in enumerate(points):
        ix.insert(p, i % 2, i)
    want = brute_nearest_point([np.array(p) for p in points], [i % 2 for i in range(len(points))],
                               range(len(points)), np.array(query))
    assert ix.nearest(query) == want


@given(st.lists(st.tuples(coords, coords, coords, coords), min_size=1, max_size=40),
       st.tuples(coords, coords))
def test_segment_index_property(segs, query):
    ix = SegmentIndex(2)
    sa = [np.array(s[:2]) for s in segs]
    sb = [np.array(s[2:]) for s in segs]
    for i in range(len(segs)):
        ix.insert(sa[i], sb[i], i % 2, i)
    want = brute_nearest_segment(sa, sb, [i % 2 for i in range(len(segs))], range(len(segs)),
                                 np.array(query))
    assert ix.nearest(query)[:2] == want
