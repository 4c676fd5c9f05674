import csv

import numpy as np
import pytest

from poisson_coloring.errors import SnapshotFormatError
from poisson_coloring.process import ProcessConfig, run
from poisson_coloring.snapshot_io import (read_snapshot, snapshot_bytes, snapshot_from_bytes,
                                          write_sites_csv, write_snapshot)


@pytest.mark.parametrize("model", ["point", "segment"])
def test_roundtrip(tmp_path, model):
    snap = run(ProcessConfig(dimension=3, model=model, n_points=300, time_mode="poisson"))
    path = tmp_path / "s.pfro"
    write_snapshot(snap, path)
    back = read_snapshot(path)
    assert back == snap
    assert np.array_equal(back.colors, snap.colors)
    assert back.stats == snap.stats
    if model == "segment":
        assert np.array_equal(back.seg_a, snap.seg_a)


def test_same_config_same_bytes():
    cfg = ProcessConfig(dimension=2, n_points=1000, rng_seed=9)
    assert snapshot_bytes(run(cfg)) == snapshot_bytes(run(cfg))


def test_corruption_detected():
    data = bytearray(snapshot_bytes(run(ProcessConfig(n_points=20))))
    with pytest.raises(SnapshotFormatError):
        snapshot_from_bytes(b"XXXX" + bytes(data[4:]))
    with pytest.raises(SnapshotFormatError):
        snapshot_from_bytes(bytes(data[:-3]))
    tampered = bytes(data).replace(b'"rng_seed":0', b'"rng_seed":7')
    with pytest.raises(SnapshotFormatError, match="hash"):
        snapshot_from_bytes(tampered)


def test_sites_csv(tmp_path):
    snap = run(ProcessConfig(dimension=2, n_points=5))
    path = tmp_path / "s.csv"
    write_sites_csv(snap, path)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 7
    assert rows[0]["color"] == "red" and rows[1]["color"] == "blue"
    assert rows[0]["parent_id"] == ""
    assert int(rows[2]["parent_id"]) in (0, 1)
    assert float(rows[3]["x0"]) == snap.positions[3, 0]
