import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import (bfs_components, brute_nearest_point, brute_nearest_segment,
                     enumerate_frontier_cells, hausdorff_double_loop)
from poisson_coloring import frontier
from poisson_coloring.errors import EmptySet, ResolutionTooLarge
from poisson_coloring.frontier import GridClassification
from poisson_coloring.process import ProcessConfig, run


def _brute_colors(snap, m):
    d = snap.dimension
    out = np.empty((m + 1,) * d, dtype=np.int8)
    keys = range(snap.n_sites)
    for idx in np.ndindex(*out.shape):
        x = np.array(idx, dtype=np.float64) / m
        if snap.seg_a is None:
            best = [brute_nearest_point(snap.positions, snap.colors, keys, x, c) for c in (0, 1)]
        else:
            best = [brute_nearest_segment(snap.seg_a, snap.seg_b, snap.colors, keys, x, c)
                    for c in (0, 1)]
        out[idx] = 0 if best[0][1] <= best[1][1] else 1
    return out


@pytest.mark.parametrize("model", ["point", "segment"])
def test_classification_matches_scan(model):
    snap = run(ProcessConfig(dimension=2, model=model, n_points=120, rng_seed=2))
    cls = frontier.classify_grid(snap, 24)
    assert np.array_equal(cls.colors, _brute_colors(snap, 24))


def test_classification_3d_matches_scan():
    snap = run(ProcessConfig(dimension=3, n_points=80))
    assert np.array_equal(frontier.classify_grid(snap, 6).colors, _brute_colors(snap, 6))


def test_two_seeds_frontier_is_bisector_column():
    snap = run(ProcessConfig(dimension=2, n_points=0))
    for m in (4, 8, 32):
        cells = frontier.frontier_of(snap, m)
        # vertices on x = 1/2 tie and go red, so the column just right of it is mixed
        assert len(cells) == m
        assert set(cells.cells[:, 0]) == {m // 2}
        assert frontier.connected_components(cells).component_count == 1


def test_checkerboard_enumeration():
    rng = np.random.default_rng(0)
    for m in (1, 2, 3, 5):
        idx = np.indices((m + 1, m + 1)).sum(axis=0)
        board = (idx % 2).astype(np.int8)
        cells = frontier.frontier_cells(GridClassification(m, board))
        assert len(cells) == m * m
        noise = rng.integers(0, 2, (m + 1, m + 1)).astype(np.int8)
        got = frontier.frontier_cells(GridClassification(m, noise))
        assert [tuple(c) for c in got.cells] == enumerate_frontier_cells(noise)


@given(st.integers(1, 7), st.integers(0, 2 ** 31 - 1))
def test_frontier_cells_property(m, seed):
    colors = np.random.default_rng(seed).integers(0, 2, (m + 1,) * 2).astype(np.int8)
    got = frontier.frontier_cells(GridClassification(m, colors))
    assert [tuple(c) for c in got.cells] == enumerate_frontier_cells(colors)
    rep = frontier.connected_components(got)
    assert rep.component_sizes == bfs_components(got.cells)


def test_components_against_bfs_on_runs():
    for seed in range(4):
        snap = run(ProcessConfig(dimension=2, n_points=3000, rng_seed=seed))
        cells = frontier.frontier_of(snap, 128)
        rep = frontier.connected_components(cells)
        sizes = bfs_components(cells.cells)
        assert rep.component_sizes == sizes and rep.component_count == len(sizes)


def test_hausdorff_against_double_loop():
    rng = np.random.default_rng(1)
    for _ in range(10):
        A = rng.random((int(rng.integers(1, 40)), 2))
        B = rng.random((int(rng.integers(1, 40)), 2))
        assert frontier.hausdorff_distance(A, B) == pytest.approx(hausdorff_double_loop(A, B),
                                                                  abs=1e-15)
    assert frontier.hausdorff_distance(A, A) == 0.0
    with pytest.raises(EmptySet):
        frontier.hausdorff_distance(np.empty((0, 2)), A)


def _coarsen(cells, factor):
    return {tuple(c) for c in cells.cells // factor}


@pytest.mark.parametrize("model", ["point", "segment"])
def test_coarse_frontier_inside_coarsened_fine(model):
    snap = run(ProcessConfig(dimension=2, model=model, n_points=2000, rng_seed=5))
    index = snap.index()
    prev = None
    for m in (8, 16, 32, 64, 128):
        cells = frontier.frontier_of(snap, m, index=index)
        if prev is not None:
            assert {tuple(c) for c in prev.cells} <= _coarsen(cells, 2)
            assert len(cells) >= len(prev)
        assert len(cells) <= m * m
        prev = cells


def test_budget_env(monkeypatch):
    snap = run(ProcessConfig(dimension=2, n_points=10))
    monkeypatch.setenv(frontier.BUDGET_ENV, "100")
    with pytest.raises(ResolutionTooLarge):
        frontier.classify_grid(snap, 16)
    frontier.classify_grid(snap, 8)


def test_slice_through_bisector_plane():
    snap = run(ProcessConfig(dimension=3, n_points=0))
    cls = frontier.classify_slice(snap, 16, axis=2, offset=0.5)
    cells = frontier.frontier_cells(cls)
    assert len(cells) == 16 and set(cells.cells[:, 0]) == {8}
    with pytest.raises(ValueError):
        frontier.classify_slice(snap, 16, axis=2, offset=1.5)


def test_convergence_series_and_writer(tmp_path):
    snap = run(ProcessConfig(dimension=2, n_points=2000, checkpoints=(10, 100, 1000)))
    series = frontier.frontier_convergence_series(snap.checkpoint_snapshots() + [snap], 64)
    assert len(series) == 3 and all(v >= 0 for v in series)
    cells = frontier.frontier_of(snap, 32)
    frontier.write_frontier(cells, tmp_path / "f.csv", tmp_path / "f.json")
    meta = json.load(open(tmp_path / "f.json"))
    assert meta["count"] == len(cells)
    assert meta["component_count"] == frontier.connected_components(cells).component_count
    assert len(open(tmp_path / "f.csv").read().splitlines()) == len(cells) + 1
