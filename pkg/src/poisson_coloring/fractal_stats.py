"""Box counting, dimension fits and Monte Carlo probes of the frontier.

Box dimension is used as a computable proxy for Hausdorff dimension.  "The
frontier meets B(x, r)" is decided on the finest classification: some frontier
cell centre lies within ``r + diam/2`` of x, where ``diam`` is the cell
diagonal.  Confidence intervals for fitted exponents are percentile bootstraps
over replicates with a fixed generator, so reports are reproducible.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from . import frontier
from .errors import CannotPlaceBalls, DegenerateFit, PreconditionViolated
from .harness import map_replicates, replicate_config
from .process import run

MIN_ARRIVALS_PER_CELL = 10
BOOTSTRAP_SAMPLES = 2000
BOOTSTRAP_SEED = 20240611
SEPARATION = 7.0
LATTICE_SPACING = 15.0


@dataclass(frozen=True)
class BoxCountCurve:
    deltas: tuple
    counts: tuple

    def __post_init__(self):
        if len(self.deltas) != len(self.counts):
            raise ValueError("deltas and counts differ in length")
        if any(b >= a for a, b in zip(self.deltas, self.deltas[1:])):
            raise ValueError("deltas must be strictly decreasing")

    def is_monotone(self):
        return all(b >= a for a, b in zip(self.counts, self.counts[1:]))

    def within_saturation(self, d):
        return all(n <= round(dl ** -d) for dl, n in zip(self.deltas, self.counts))


@dataclass(frozen=True)
class DimensionEstimate:
    slope: float
    stderr: float
    r_squared: float
    window: tuple
    n_scales: int
    intercept: float = 0.0


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    intercept: float
    deltas: tuple
    frequencies: tuple
    ci: tuple = (math.nan, math.nan)
    replicates: int = 0


@dataclass(frozen=True)
class BallRate:
    p_hat: float
    ci: tuple
    hits: int
    replicates: int


@dataclass(frozen=True)
class DecayFit:
    sizes: tuple
    frequencies: tuple
    slope: float
    ci: tuple
    centers: tuple = ()
    radius: float = 0.0
    replicates: int = 0


# --------------------------------------------------------------------------
# box counting
# --------------------------------------------------------------------------

def _is_dyadic(m):
    return m >= 1 and (m & (m - 1)) == 0


def box_count(snapshot, scales, index=None):
    """Frontier cell counts at every grid resolution m in ``scales`` (m = 2^j)."""
    scales = sorted(int(m) for m in scales)
    if not scales or any(not _is_dyadic(m) for m in scales):
        raise ValueError("scales must be powers of two")
    index = snapshot.index() if index is None else index
    counts = [len(frontier.frontier_of(snapshot, m, index=index)) for m in scales]
    return BoxCountCurve(tuple(1.0 / m for m in scales), tuple(counts))


def box_count_classifications(classifications):
    """Box-count curve from precomputed classifications (any order)."""
    cls = sorted(classifications, key=lambda c: c.m)
    return BoxCountCurve(tuple(c.delta for c in cls),
                         tuple(len(frontier.frontier_cells(c)) for c in cls))


def scale_window(n_arrivals, d, deltas, min_per_cell=MIN_ARRIVALS_PER_CELL):
    """The scales whose cells expect at least ``min_per_cell`` arrivals."""
    return [dl for dl in deltas if n_arrivals * dl ** d >= min_per_cell]


def _ols(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    xm = x.mean()
    ym = y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    sse = float((resid ** 2).sum())
    syy = float(((y - ym) ** 2).sum())
    stderr = math.sqrt(sse / (n - 2) / sxx) if n > 2 else math.nan
    r2 = 1.0 - sse / syy if syy > 0 else 1.0
    return slope, intercept, stderr, r2


def fit_dimension(curve: BoxCountCurve, window=None) -> DimensionEstimate:
    """OLS slope of log N against log(1/delta) over ``window`` = (dmin, dmax)."""
    pairs = list(zip(curve.deltas, curve.counts))
    if window is not None:
        lo, hi = window
        pairs = [(dl, n) for dl, n in pairs if lo * (1 - 1e-12) <= dl <= hi * (1 + 1e-12)]
    if len(pairs) < 3:
        raise DegenerateFit(f"need at least 3 scales in the window, got {len(pairs)}")
    if any(n <= 0 for _, n in pairs):
        raise DegenerateFit("a scale in the window has no frontier cells")
    x = [math.log(1.0 / dl) for dl, _ in pairs]
    y = [math.log(n) for _, n in pairs]
    slope, intercept, stderr, r2 = _ols(x, y)
    deltas = [dl for dl, _ in pairs]
    return DimensionEstimate(slope, stderr, r2, (min(deltas), max(deltas)),
                             len(pairs), intercept)


def lebesgue_decay(curve: BoxCountCurve, d):
    """Volume proxy N_k * delta_k^d for every scale."""
    return [n * dl ** d for dl, n in zip(curve.deltas, curve.counts)]


def slice_dimension(snapshot, axis, offsets, scales, window=None, plane_axes=None):
    """Box dimension of planar slices of a d >= 3 frontier, one per offset."""
    if snapshot.dimension < 3:
        raise ValueError("slicing needs d >= 3")
    scales = sorted(int(m) for m in scales)
    if any(not _is_dyadic(m) for m in scales):
        raise ValueError("scales must be powers of two")
    index = snapshot.index()
    out = []
    for z in offsets:
        cls = [frontier.classify_slice(snapshot, m, axis, z, plane_axes=plane_axes,
                                       index=index) for m in scales]
        out.append(fit_dimension(box_count_classifications(cls), window))
    return out


# --------------------------------------------------------------------------
# "frontier meets a ball"
# --------------------------------------------------------------------------

def frontier_distances(snapshot, points, m, index=None):
    """Distance from each point to the nearest frontier cell centre at scale 1/m.

    Returns +inf everywhere when the frontier is empty.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    centers = frontier.frontier_of(snapshot, m, index=index).centers()
    if centers.shape[0] == 0:
        return np.full(points.shape[0], np.inf)
    dist, _ = cKDTree(centers).query(points, k=1)
    return dist


def meets_ball_slack(m, d):
    return 0.5 * math.sqrt(d) / m


def _seed_distances(config, x):
    x = np.asarray(x, dtype=np.float64)
    return (float(np.linalg.norm(np.asarray(config.seed_red) - x)),
            float(np.linalg.norm(np.asarray(config.seed_blue) - x)))


def _bootstrap(hits, statistic, samples=BOOTSTRAP_SAMPLES, seed=BOOTSTRAP_SEED):
    """Percentile 95% interval of statistic(hits[resampled rows])."""
    rng = np.random.default_rng(seed)
    n = hits.shape[0]
    vals = []
    for _ in range(samples):
        v = statistic(hits[rng.integers(0, n, n)])
        if np.isfinite(v):
            vals.append(v)
    if len(vals) < samples // 2:
        return (math.nan, math.nan)
    lo, hi = np.percentile(vals, [2.5, 97.5])
    return (float(lo), float(hi))


def frontier_hits(snapshot, x, deltas, m, index=None):
    """Per-radius indicator that the frontier at scale 1/m meets B(x, delta)."""
    dist = frontier_distances(snapshot, [x], m, index=index)[0]
    slack = meets_ball_slack(m, snapshot.dimension)
    return [bool(dist <= dl + slack) for dl in deltas]


def _log_slope(xs, freqs):
    if np.any(freqs <= 0):
        return math.nan
    return _ols(xs, np.log(freqs))[0]


def check_hitting_precondition(config, x, deltas):
    if min(_seed_distances(config, x)) <= math.sqrt(max(deltas)):
        raise PreconditionViolated(
            f"a seed lies in the closed ball B(x, sqrt({max(deltas)}))")


def fit_hitting(hits, deltas):
    """Log-log fit of hit frequency against radius; ``hits`` is (replicates, radii)."""
    hits = np.asarray(hits, dtype=bool)
    freqs = hits.mean(axis=0)
    logd = np.log(np.asarray(deltas, dtype=np.float64))
    if np.any(freqs <= 0):
        raise DegenerateFit("some radius was never hit; cannot fit an exponent")
    slope, intercept, _, _ = _ols(logd, np.log(freqs))
    ci = _bootstrap(hits, lambda h: _log_slope(logd, h.mean(axis=0)))
    return ScalingFit(slope, intercept, tuple(float(v) for v in deltas),
                      tuple(float(f) for f in freqs), ci, int(hits.shape[0]))


def _hit_replicate(r, config, x, deltas, m):
    return frontier_hits(run(replicate_config(config, r)), x, deltas, m)


def hitting_probability_scaling(config, replicates, x, deltas, m=512, workers=1):
    """Empirical P(frontier meets B(x, delta)) and its log-log exponent."""
    deltas = sorted((float(dl) for dl in deltas), reverse=True)
    if replicates < 30:
        raise PreconditionViolated("at least 30 replicates are required")
    if len(deltas) < 2:
        raise ValueError("need at least two radii")
    check_hitting_precondition(config, x, deltas)
    hits = map_replicates(_hit_replicate, replicates, (config, tuple(x), deltas, m), workers)
    return fit_hitting(hits, deltas)


def is_monochromatic(snapshot, x, radius):
    """True when the closed ball B(x, radius) holds sites of at most one color."""
    d2 = ((snapshot.positions - np.asarray(x, dtype=np.float64)) ** 2).sum(axis=1)
    return bool(np.unique(snapshot.colors[d2 <= radius * radius]).size <= 1)


def check_ball_precondition(config, x, r):
    if min(_seed_distances(config, x)) <= r:
        raise PreconditionViolated("a seed lies in the closed ball B(x, r)")


def ball_rate(flags):
    """Proportion with an exact (Clopper-Pearson) 95% interval."""
    n = len(flags)
    k = int(sum(bool(f) for f in flags))
    ci = stats.binomtest(k, n).proportion_ci(confidence_level=0.95, method="exact")
    return BallRate(k / n, (float(ci.low), float(ci.high)), k, n)


def _mono_replicate(r, config, x, radius):
    return is_monochromatic(run(replicate_config(config, r)), x, radius)


def monochromatic_ball_rate(config, replicates, x, r, workers=1):
    """Fraction of replicates where B(x, r/6) holds sites of at most one color."""
    check_ball_precondition(config, x, r)
    return ball_rate(map_replicates(_mono_replicate, replicates,
                                    (config, tuple(x), r / 6.0), workers))


def lattice_ball_family(config, count, r, spacing=None):
    """``count`` centres on the seeds' bisector, ordered outward from the midpoint.

    Consecutive centres are ``spacing`` (default 15 r) apart along a direction
    orthogonal to the seed axis, alternating sides: 0, +1, -1, +2, -2, ...
    Every centre must lie in the cube and keep both seeds out of its 7-dilate;
    7-dilates are pairwise disjoint because spacing > 14 r.
    """
    spacing = LATTICE_SPACING * r if spacing is None else spacing
    if spacing <= 2 * SEPARATION * r:
        raise CannotPlaceBalls("spacing too small for 7-separation")
    red = np.asarray(config.seed_red)
    blue = np.asarray(config.seed_blue)
    d = config.dimension
    mid = 0.5 * (red + blue)
    axis = (blue - red) / np.linalg.norm(blue - red)
    direction = None
    for e in np.eye(d):
        v = e - axis * float(e @ axis)
        if np.linalg.norm(v) > 1e-9:
            direction = v / np.linalg.norm(v)
            break
    if direction is None:
        raise CannotPlaceBalls("lattice placement needs d >= 2")
    centers = []
    for j in range(count):
        k = (j + 1) // 2 * (1 if j % 2 else -1)
        c = mid + k * spacing * direction
        if np.any(c < 0) or np.any(c > 1):
            raise CannotPlaceBalls(f"centre {j} falls outside the cube")
        if min(np.linalg.norm(c - red), np.linalg.norm(c - blue)) <= SEPARATION * r:
            raise CannotPlaceBalls(f"a seed lies in the dilate of ball {j}")
        centers.append(c)
    return np.array(centers).reshape(count, d)


def family_hits(snapshot, centers, r, m, index=None):
    """Per-ball indicator that the frontier at scale 1/m meets B(c, r)."""
    dist = frontier_distances(snapshot, centers, m, index=index)
    return (dist <= r + meets_ball_slack(m, snapshot.dimension)).tolist()


def _family_replicate(r, config, centers, radius, m):
    return family_hits(run(replicate_config(config, r)), centers, radius, m)


def default_ball_radius(n_max):
    return 1.0 / (LATTICE_SPACING * max(n_max, 1))


def _all_hit(hits, sizes):
    return np.array([hits[:, :n].all(axis=1).mean() if n else 1.0 for n in sizes])


def _log_all_hit(hits, sizes):
    # (k + 1/2) / (N + 1) keeps the logarithm finite when no replicate hits all
    k = np.array([hits[:, :n].all(axis=1).sum() for n in sizes], dtype=np.float64)
    return np.log((k + 0.5) / (hits.shape[0] + 1.0))


def fit_ball_decay(hits, sizes, centers=(), r=0.0):
    """All-hit frequency for each family size and its log-slope in n.

    ``hits`` is (replicates, balls).  The slope is fitted to
    log((k + 1/2) / (N + 1)) so that sizes no replicate fully hits still
    contribute.
    """
    sizes = sorted(int(n) for n in sizes)
    hits = np.asarray(hits, dtype=bool).reshape(len(hits), -1)
    freqs = _all_hit(hits, sizes)
    fit_sizes = [n for n in sizes if n > 0]
    slope = math.nan
    ci = (math.nan, math.nan)
    if len(fit_sizes) >= 2:
        fx = np.array(fit_sizes, dtype=np.float64)
        slope = _ols(fx, _log_all_hit(hits, fit_sizes))[0]
        ci = _bootstrap(hits, lambda h: _ols(fx, _log_all_hit(h, fit_sizes))[0])
    return DecayFit(tuple(sizes), tuple(float(v) for v in freqs), slope, ci,
                    tuple(tuple(c) for c in np.asarray(centers).tolist()), float(r),
                    int(hits.shape[0]))


def separated_ball_decay(config, ball_family_sizes, replicates, r=None, m=256, workers=1):
    """P(frontier meets all of the first n balls) for every n, and log-slope in n.

    The families are nested prefixes of one lattice family, so frequencies are
    nonincreasing in n.  Default radius: spacing 1/max(n) along the bisector.
    """
    sizes = sorted(int(n) for n in ball_family_sizes)
    n_max = max(sizes)
    r = default_ball_radius(n_max) if r is None else r
    if n_max == 0:
        return fit_ball_decay(np.ones((replicates, 0), dtype=bool), sizes, (), r)
    centers = lattice_ball_family(config, n_max, r)
    hits = map_replicates(_family_replicate, replicates, (config, centers, r, m), workers)
    return fit_ball_decay(hits, sizes, centers, r)
