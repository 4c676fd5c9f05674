import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from poisson_coloring import fractal_stats as fs
from poisson_coloring.errors import CannotPlaceBalls, DegenerateFit, PreconditionViolated
from poisson_coloring.frontier import GridClassification
from poisson_coloring.process import ProcessConfig, run

TWO_SEEDS = ProcessConfig(dimension=2, n_points=0)


def test_planted_bisector_counts():
    curve = fs.box_count(run(TWO_SEEDS), [4, 8, 16, 32, 64])
    assert curve.counts == (4, 8, 16, 32, 64)
    assert curve.is_monotone() and curve.within_saturation(2)
    assert fs.fit_dimension(curve).slope == pytest.approx(1.0, abs=1e-12)
    assert fs.lebesgue_decay(curve, 2) == pytest.approx(list(curve.deltas))


def test_saturated_classification():
    cls = []
    for m in (2, 4, 8, 16):
        idx = np.indices((m + 1, m + 1)).sum(axis=0)
        cls.append(GridClassification(m, (idx % 2).astype(np.int8)))
    curve = fs.box_count_classifications(cls)
    assert curve.counts == (4, 16, 64, 256)
    assert fs.fit_dimension(curve).slope == pytest.approx(2.0, abs=1e-12)
    assert fs.lebesgue_decay(curve, 2) == pytest.approx([1.0] * 4)


@given(st.floats(0.5, 2.5), st.floats(0.1, 10.0))
def test_exact_power_law_recovered(exponent, C):
    deltas = tuple(2.0 ** -k for k in range(2, 9))
    counts = tuple(C * d ** -exponent for d in deltas)
    est = fs.fit_dimension(fs.BoxCountCurve(deltas, counts))
    assert est.slope == pytest.approx(exponent, abs=1e-9)
    assert est.r_squared == pytest.approx(1.0)


def test_noisy_power_law():
    rng = np.random.default_rng(0)
    deltas = tuple(2.0 ** -k for k in range(2, 10))
    counts = tuple(3.0 * d ** -1.5 * math.exp(rng.normal(scale=0.01)) for d in deltas)
    est = fs.fit_dimension(fs.BoxCountCurve(deltas, counts))
    assert abs(est.slope - 1.5) < 0.05 and est.stderr > 0


def test_fit_errors_and_window():
    curve = fs.BoxCountCurve((0.5, 0.25, 0.125, 0.0625), (0, 2, 4, 8))
    with pytest.raises(DegenerateFit):
        fs.fit_dimension(curve)
    est = fs.fit_dimension(curve, window=(0.0625, 0.25))
    assert est.n_scales == 3 and est.slope == pytest.approx(1.0)
    with pytest.raises(DegenerateFit):
        fs.fit_dimension(curve, window=(0.0625, 0.125))
    with pytest.raises(ValueError):
        fs.BoxCountCurve((0.25, 0.5), (1, 2))
    with pytest.raises(ValueError):
        fs.box_count(run(TWO_SEEDS), [3, 8])


def test_scale_window_rule():
    deltas = [2.0 ** -k for k in range(4, 10)]
    assert fs.scale_window(10 ** 6, 2, deltas) == [2.0 ** -k for k in range(4, 9)]
    assert fs.scale_window(10 ** 6, 3, [2.0 ** -k for k in range(2, 7)]) == \
        [2.0 ** -k for k in range(2, 6)]


def test_hitting_preconditions():
    cfg = ProcessConfig(dimension=2, n_points=100)
    with pytest.raises(PreconditionViolated):
        fs.hitting_probability_scaling(cfg, 30, (0.3, 0.5), [0.1, 0.05])
    with pytest.raises(PreconditionViolated):
        fs.hitting_probability_scaling(cfg, 10, (0.5, 0.25), [0.01, 0.005])


def test_frontier_hits_monotone_and_big_ball():
    for seed in range(5):
        snap = run(ProcessConfig(dimension=2, n_points=2000, rng_seed=seed))
        deltas = [2.0, 0.25, 0.1, 0.05, 0.02, 0.01]
        hits = fs.frontier_hits(snap, (0.5, 0.25), deltas, 128)
        assert hits[0]
        assert all(a >= b for a, b in zip(hits, hits[1:]))


def test_fit_hitting_on_planted_frequencies():
    deltas = [0.1, 0.05, 0.025]
    hits = np.zeros((40, 3), dtype=bool)
    hits[:32, 0] = True
    hits[:16, 1] = True
    hits[:8, 2] = True
    fit = fs.fit_hitting(hits, deltas)
    assert fit.exponent == pytest.approx(1.0)
    assert fit.frequencies == (0.8, 0.4, 0.2)
    assert fit.ci[0] <= fit.exponent <= fit.ci[1]


def test_monochromatic_rate():
    zero = fs.monochromatic_ball_rate(ProcessConfig(n_points=0), 5, (0.5, 0.5), 0.2)
    assert zero.p_hat == 1.0
    with pytest.raises(PreconditionViolated):
        fs.monochromatic_ball_rate(ProcessConfig(n_points=0), 5, (0.5, 0.5), 0.3)
    br = fs.ball_rate([1, 0, 1, 1])
    assert br.p_hat == 0.75 and br.ci[0] < 0.75 < br.ci[1]


def test_is_monochromatic_by_hand():
    snap = run(ProcessConfig(dimension=2, n_points=0))
    assert fs.is_monochromatic(snap, (0.5, 0.5), 0.2)
    assert not fs.is_monochromatic(snap, (0.5, 0.5), 0.25)


def test_lattice_family_is_separated():
    cfg = ProcessConfig(dimension=2, n_points=0)
    r = fs.default_ball_radius(5)
    c = fs.lattice_ball_family(cfg, 5, r)
    assert np.allclose(c[:, 0], 0.5)
    assert np.allclose(c[:, 1], [0.5, 0.7, 0.3, 0.9, 0.1])
    dil = 7 * r
    for i in range(5):
        for j in range(i + 1, 5):
            assert np.linalg.norm(c[i] - c[j]) > 2 * dil
        for seed in (cfg.seed_red, cfg.seed_blue):
            assert np.linalg.norm(c[i] - np.asarray(seed)) > dil
    with pytest.raises(CannotPlaceBalls):
        fs.lattice_ball_family(cfg, 7, r)
    with pytest.raises(CannotPlaceBalls):
        fs.lattice_ball_family(cfg, 2, 0.1)


def test_ball_decay_trivial_cases():
    cfg = ProcessConfig(dimension=2, n_points=200)
    out = fs.separated_ball_decay(cfg, [0], 3)
    assert out.frequencies == (1.0,)
    out = fs.separated_ball_decay(cfg, [0, 1, 2, 3], 10)
    f = out.frequencies
    assert f[0] == 1.0 and all(a >= b for a, b in zip(f, f[1:]))


def test_fit_ball_decay_geometric():
    # all-hit counts 32, 16, 8 out of 64: slope close to log(1/2)
    hits = np.zeros((64, 3), dtype=bool)
    hits[:32, 0] = True
    hits[:16, :2] = True
    hits[:8, :] = True
    out = fs.fit_ball_decay(hits, [1, 2, 3])
    assert out.frequencies == (0.5, 0.25, 0.125)
    assert out.slope == pytest.approx(math.log(16.5 / 32.5), rel=0.05)


def test_slice_dimension():
    snap = run(ProcessConfig(dimension=3, n_points=0))
    est = fs.slice_dimension(snap, 2, [0.5], [4, 8, 16, 32])[0]
    assert est.slope == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DegenerateFit):
        fs.slice_dimension(snap, 0, [0.1], [4, 8, 16])
    with pytest.raises(ValueError):
        fs.slice_dimension(run(TWO_SEEDS), 1, [0.5], [4, 8, 16])


def test_real_run_curve_invariants():
    snap = run(ProcessConfig(dimension=2, n_points=20_000))
    curve = fs.box_count(snap, [4, 8, 16, 32, 64, 128])
    assert curve.is_monotone() and curve.within_saturation(2)
    est = fs.fit_dimension(curve, (1 / 32, 1 / 4))
    assert 1.0 < est.slope < 2.0
