import json

from poisson_coloring.cli import main
from poisson_coloring.snapshot_io import read_snapshot


def test_simulate_zero_points(tmp_path):
    out = tmp_path / "s.pfro"
    assert main(["simulate", "--dim", "2", "--model", "point", "--n", "0", "--out", str(out)]) == 0
    assert read_snapshot(out).n_sites == 2


def test_simulate_is_deterministic(tmp_path):
    args = ["simulate", "--dim", "2", "--n", "500", "--rng", "5", "--seed-red", "0.1,0.1",
            "--seed-blue", "0.9,0.9", "--checkpoints", "10,100"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    snap = read_snapshot(tmp_path / "a")
    assert snap.config.seed_red == (0.1, 0.1) and snap.config.checkpoints == (10, 100)


def test_simulate_poisson(tmp_path):
    out = tmp_path / "p"
    assert main(["simulate", "--poisson", "--t-max", "50", "--out", str(out)]) == 0
    snap = read_snapshot(out)
    assert snap.times[-1] <= 50


def test_invalid_flags(tmp_path, capsys):
    assert main(["simulate", "--t-max", "5", "--out", str(tmp_path / "x")]) == 2
    assert main(["simulate", "--dim", "2", "--seed-red", "0.5,0.5", "--seed-blue", "0.5,0.5",
                 "--n", "3", "--out", str(tmp_path / "x")]) == 2
    assert "error" in capsys.readouterr().err


def test_render_frontier_dimension(tmp_path):
    snap = tmp_path / "s.pfro"
    main(["simulate", "--n", "2000", "--out", str(snap)])
    assert main(["render", str(snap), "--out", str(tmp_path / "s.svg"), "--frontier-m", "32"]) == 0
    assert "<svg" in (tmp_path / "s.svg").read_text()
    assert main(["frontier", str(snap), "--m", "32", "--out-csv", str(tmp_path / "f.csv"),
                 "--out-json", str(tmp_path / "f.json")]) == 0
    assert json.loads((tmp_path / "f.json").read_text())["m"] == 32
    assert main(["dimension", str(snap), "--scales", "4,8,16,32", "--window", "all",
                 "--out", str(tmp_path / "d.json")]) == 0
    assert 1.0 < json.loads((tmp_path / "d.json").read_text())["slope"] < 2.0


def test_render_rejects_3d(tmp_path, capsys):
    snap = tmp_path / "s.pfro"
    main(["simulate", "--dim", "3", "--n", "10", "--out", str(snap)])
    assert main(["render", str(snap), "--out", str(tmp_path / "s.svg")]) == 2
    assert "UnsupportedDimension" in capsys.readouterr().err


def test_split_command(tmp_path, capsys):
    line = tmp_path / "line.csv"
    line.write_text("x,y\n0,0\n1,0\n")
    assert main(["split", str(line), "--alpha", "0.1", "--depth", "2",
                 "--out", str(tmp_path / "o.json")]) == 0
    doc = json.loads((tmp_path / "o.json").read_text())
    assert doc["split"]["kappa"] >= 9
    assert all(abs(s - 1) < 1e-12 for s in doc["tree"]["level_weight_sums"])
    closed = tmp_path / "closed.csv"
    closed.write_text("0,0\n1,1\n0,0\n")
    assert main(["split", str(closed), "--alpha", "0.1"]) == 2
    assert "DegenerateCurve" in capsys.readouterr().err


def test_experiment_command(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"config": {"n_points": 100}, "replicates": 2,
                                "analyses": [{"name": "frontier_components",
                                              "params": {"m": 16}}]}))
    assert main(["experiment", str(spec), "--out-dir", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "rows.csv").read_text().count("\n") == 3
