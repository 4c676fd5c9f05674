"""Stopping-time decomposition of polylines into well-separated sub-paths.

Curves are polylines parameterized by normalized arc length on [0, 1].  All
crossing times are exact per edge: a point ``a + u (b - a)`` leaves a ball or
a sausage (the r-neighbourhood of a segment) at a root of a quadratic in
``u``.  Internally a time is an (edge, u) pair; public outputs use the global
arc-length parameter.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DegenerateCurve, DepthInfeasible, NonpositiveBound

RADICAL_TOL = 1e-12
MAX_TREE_NODES = 2_000_000


class Polyline:
    """Vertices of a piecewise linear path, consecutive duplicates removed."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 2:
            raise DegenerateCurve("a polyline needs at least two vertices")
        keep = np.ones(v.shape[0], dtype=bool)
        keep[1:] = np.any(v[1:] != v[:-1], axis=1)
        v = np.ascontiguousarray(v[keep])
        if v.shape[0] < 2:
            raise DegenerateCurve("all vertices coincide")
        self.vertices = v
        self.edge_lengths = np.linalg.norm(np.diff(v, axis=0), axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(self.edge_lengths)])
        self.length = float(self.cum[-1])

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def n_edges(self):
        return self.vertices.shape[0] - 1

    def span(self):
        return float(np.linalg.norm(self.vertices[-1] - self.vertices[0]))

    def diameter(self):
        # attained at a pair of vertices since |x - y| is convex
        v = self.vertices
        best = 0.0
        for i in range(v.shape[0] - 1):
            best = max(best, float(np.max(np.linalg.norm(v[i + 1:] - v[i], axis=1))))
        return best

    def to_global(self, e, u):
        return float((self.cum[e] + u * self.edge_lengths[e]) / self.length)

    def locate(self, t):
        """(edge, u) for a global parameter t in [0, 1]."""
        s = min(max(float(t), 0.0), 1.0) * self.length
        e = int(np.searchsorted(self.cum, s, side="right") - 1)
        e = min(max(e, 0), self.n_edges - 1)
        u = (s - self.cum[e]) / self.edge_lengths[e]
        return e, min(max(u, 0.0), 1.0)

    def point(self, t):
        """gamma(t); ``t`` may be a scalar or an array."""
        t = np.asarray(t, dtype=np.float64)
        s = np.clip(t, 0.0, 1.0) * self.length
        e = np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, self.n_edges - 1)
        u = np.clip((s - self.cum[e]) / self.edge_lengths[e], 0.0, 1.0)
        a = self.vertices[e]
        b = self.vertices[e + 1]
        return a + u[..., None] * (b - a)

    def subpath(self, t0, t1):
        """The polyline gamma restricted to [t0, t1], as a new Polyline."""
        e0, u0 = self.locate(t0)
        e1, u1 = self.locate(t1)
        return Polyline(_piece_vertices(self.vertices, e0, u0, e1, u1))


def _piece_vertices(v, e0, u0, e1, u1):
    p0 = v[e0] + u0 * (v[e0 + 1] - v[e0])
    p1 = v[e1] + u1 * (v[e1 + 1] - v[e1])
    return np.vstack([p0[None], v[e0 + 1:e1 + 1], p1[None]])


# --------------------------------------------------------------------------
# exact per-edge kernels
# --------------------------------------------------------------------------

@njit(cache=True)
def _quad_interval(p0, pv, r2):
    """{u real : |p0 + u pv|^2 <= r2} as (lo, hi); lo > hi means empty."""
    A = 0.0
    B = 0.0
    C = -r2
    for k in range(p0.shape[0]):
        A += pv[k] * pv[k]
        B += 2.0 * pv[k] * p0[k]
        C += p0[k] * p0[k]
    if A == 0.0:
        if C <= 0.0:
            return -np.inf, np.inf
        return 1.0, 0.0
    disc = B * B - 4.0 * A * C
    if disc < 0.0:
        if disc < -RADICAL_TOL * (B * B + 4.0 * A * abs(C)):
            return 1.0, 0.0
        disc = 0.0
    sq = math.sqrt(disc)
    if B >= 0.0:
        q = -0.5 * (B + sq)
    else:
        q = -0.5 * (B - sq)
    if q == 0.0:
        return 0.0, 0.0
    r1 = q / A
    r2_ = C / q
    if r1 <= r2_:
        return r1, r2_
    return r2_, r1


@njit(cache=True)
def _ball_interval(a, v, c, r2):
    return _quad_interval(a - c, v, r2)


@njit(cache=True)
def _sausage_interval(a, v, s0, s1, R):
    """Parameters u with a + u v within distance R of the segment [s0, s1]."""
    r2 = R * R
    lo, hi = _ball_interval(a, v, s0, r2)
    l2, h2 = _ball_interval(a, v, s1, r2)
    if l2 <= h2:
        if lo > hi:
            lo, hi = l2, h2
        else:
            lo = min(lo, l2)
            hi = max(hi, h2)
    w = s1 - s0
    L2 = 0.0
    for k in range(w.shape[0]):
        L2 += w[k] * w[k]
    if L2 > 0.0:
        q0 = a - s0
        c0 = 0.0
        cv = 0.0
        for k in range(w.shape[0]):
            c0 += q0[k] * w[k]
            cv += v[k] * w[k]
        c0 /= L2
        cv /= L2
        # slab 0 <= c0 + u cv <= 1
        if cv == 0.0:
            if 0.0 <= c0 <= 1.0:
                sl, sh = -np.inf, np.inf
            else:
                sl, sh = 1.0, 0.0
        elif cv > 0.0:
            sl, sh = -c0 / cv, (1.0 - c0) / cv
        else:
            sl, sh = (1.0 - c0) / cv, -c0 / cv
        if sl <= sh:
            cl, ch = _quad_interval(q0 - c0 * w, v - cv * w, r2)
            cl = max(cl, sl)
            ch = min(ch, sh)
            if cl <= ch:
                if lo > hi:
                    lo, hi = cl, ch
                else:
                    lo = min(lo, cl)
                    hi = max(hi, ch)
    return lo, hi


@njit(cache=True)
def _first_exit_ball(V, e, u, c, r2, strict):
    """First (edge, u) at or after (e, u) with |gamma - c|^2 > r2 (>= if not strict).

    Returns (-1, 1.0) when the path never leaves.
    """
    n_edges = V.shape[0] - 1
    lo = u
    for ed in range(e, n_edges):
        a = V[ed]
        v = V[ed + 1] - V[ed]
        il, ih = _ball_interval(a, v, c, r2)
        if strict:
            if il > ih or lo < il or lo > ih:
                return ed, lo
            if ih < 1.0:
                return ed, max(ih, lo)
        else:
            # first time the squared distance reaches r2
            d0 = 0.0
            for k in range(a.shape[0]):
                x = a[k] + lo * v[k] - c[k]
                d0 += x * x
            if d0 >= r2:
                return ed, lo
            if il <= ih and ih <= 1.0 and ih >= lo:
                return ed, ih
        lo = 0.0
    return -1, 1.0


@njit(cache=True)
def _last_outside_ball(V, e_lo, u_lo, e_hi, u_hi, c, r2):
    """sup{t in [lo, hi) : |gamma(t) - c| > r}, or (-1, 0) if none."""
    for ed in range(e_hi, e_lo - 1, -1):
        a = V[ed]
        v = V[ed + 1] - V[ed]
        lo = u_lo if ed == e_lo else 0.0
        hi = u_hi if ed == e_hi else 1.0
        if hi < lo:
            continue
        il, ih = _ball_interval(a, v, c, r2)
        if il > ih or hi > ih or hi < il:
            if ed != e_hi:
                return ed, hi
        if il <= ih and il > lo:
            return ed, min(il, hi)
    return -1, 0.0


@njit(cache=True)
def _first_uncovered(V, e, u, SA, SB, ns, R):
    """First (edge, u) at or after (e, u) farther than R from every segment in SA/SB."""
    n_edges = V.shape[0] - 1
    d = V.shape[1]
    lows = np.empty(ns)
    highs = np.empty(ns)
    lo = u
    for ed in range(e, n_edges):
        a = V[ed]
        b = V[ed + 1]
        v = b - a
        cnt = 0
        for j in range(ns):
            skip = False
            for k in range(d):
                emin = min(a[k], b[k])
                emax = max(a[k], b[k])
                smin = min(SA[j, k], SB[j, k]) - R
                smax = max(SA[j, k], SB[j, k]) + R
                if emax < smin or emin > smax:
                    skip = True
                    break
            if skip:
                continue
            il, ih = _sausage_interval(a, v, SA[j], SB[j], R)
            if il <= ih and ih >= lo and il <= 1.0:
                lows[cnt] = il
                highs[cnt] = ih
                cnt += 1
        order = np.argsort(lows[:cnt])
        cur = lo
        covered = False
        for idx in order:
            if lows[idx] > cur:
                break
            if highs[idx] >= cur:
                covered = True
                cur = highs[idx]
        if not covered:
            return ed, lo
        if cur < 1.0:
            return ed, cur
        lo = 0.0
    return -1, 1.0


@njit(cache=True)
def _append_piece(V, e0, u0, e1, u1, SA, SB, ns):
    p = V[e0] + u0 * (V[e0 + 1] - V[e0])
    for ed in range(e0, e1 + 1):
        if ed == e1:
            q = V[e1] + u1 * (V[e1 + 1] - V[e1])
        else:
            q = V[ed + 1].copy()
        SA[ns] = p
        SB[ns] = q
        ns += 1
        p = q
    return ns


@njit(cache=True)
def _split_kernel(V, delta, alpha):
    n_edges = V.shape[0] - 1
    d = V.shape[1]
    cap = 64
    out = np.empty((cap, 4))
    SA = np.empty((n_edges * 4 + 16, d))
    SB = np.empty((n_edges * 4 + 16, d))
    ns = 0
    r2 = delta * delta
    e1, u1 = _first_exit_ball(V, 0, 0.0, V[0].copy(), r2, True)
    if e1 < 0:
        return out[:0]
    es, us = 0, 0.0
    k = 0
    R = (1.0 + alpha) * delta
    while True:
        if e1 == n_edges - 1 and u1 >= 1.0:
            break
        if k == cap:
            grown = np.empty((2 * cap, 4))
            grown[:cap] = out
            out = grown
            cap *= 2
        out[k, 0] = es
        out[k, 1] = us
        out[k, 2] = e1
        out[k, 3] = u1
        k += 1
        need = ns + (e1 - es + 1)
        if need > SA.shape[0]:
            size = max(2 * SA.shape[0], need)
            ga = np.empty((size, d))
            gb = np.empty((size, d))
            ga[:ns] = SA[:ns]
            gb[:ns] = SB[:ns]
            SA = ga
            SB = gb
        ns = _append_piece(V, es, us, e1, u1, SA, SB, ns)
        en, un = _first_uncovered(V, e1, u1, SA, SB, ns, R)
        if en < 0:
            break
        c = V[en] + un * (V[en + 1] - V[en])
        es, us = _last_outside_ball(V, e1, u1, en, un, c, r2)
        if es < 0:
            es, us = e1, u1
        e1, u1 = en, un
    return out[:k]


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitOutput:
    Delta: float
    delta: float
    intervals: tuple
    kappa: int

    def to_dict(self):
        return {"Delta": self.Delta, "delta": self.delta, "kappa": self.kappa,
                "intervals": [list(iv) for iv in self.intervals]}


@dataclass(frozen=True)
class DeviationReport:
    rho_max: float
    argmax_vertex: int = 0


def _as_polyline(curve):
    return curve if isinstance(curve, Polyline) else Polyline(curve)


def split_once(curve, alpha) -> SplitOutput:
    """Sub-paths of span alpha * |gamma(0) - gamma(1)| from the stopping-time rule.

    A sub-path ends (tau) when the path first gets farther than (1 + alpha) delta
    from all previous sub-paths and starts (sigma) at the last earlier time it
    was outside the closed delta-ball around that point.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    poly = _as_polyline(curve)
    Delta = poly.span()
    if Delta == 0.0:
        raise DegenerateCurve("polyline endpoints coincide")
    delta = alpha * Delta
    raw = _split_kernel(poly.vertices, delta, alpha)
    intervals = tuple((poly.to_global(int(r[0]), r[1]), poly.to_global(int(r[2]), r[3]))
                      for r in raw)
    return SplitOutput(Delta, delta, intervals, len(intervals))


def deviation_factor(curve) -> DeviationReport:
    """Largest distance from the path to its chord segment, in units of the chord."""
    poly = _as_polyline(curve)
    v = poly.vertices
    a = v[0]
    b = v[-1]
    w = b - a
    L2 = float(w @ w)
    if L2 == 0.0:
        raise DegenerateCurve("polyline endpoints coincide")
    t = np.clip(((v - a) @ w) / L2, 0.0, 1.0)
    dist = np.linalg.norm(v - (a + t[:, None] * w), axis=1)
    i = int(np.argmax(dist))
    return DeviationReport(float(dist[i] / math.sqrt(L2)), i)


def kappa_lower_bounds(alpha, rho):
    """(bound for any path, bound for a path deviating by factor rho)."""
    den = (1.0 + alpha) * alpha
    plain = (1.0 - alpha) / den
    deviating = (0.5 * (1.0 + math.sqrt(1.0 + 2.0 * rho * rho)) - (4.0 + alpha) * alpha) / den
    return plain, deviating


def beta_of_alpha(alpha):
    """Inverse geometric mean of the two kappa bounds at rho = sqrt(18 alpha)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    plain, deviating = kappa_lower_bounds(alpha, math.sqrt(18.0 * alpha))
    if plain <= 0.0 or deviating <= 0.0:
        raise NonpositiveBound(f"a kappa lower bound is nonpositive at alpha={alpha}")
    return 1.0 / math.sqrt(plain * deviating)


@dataclass
class SplitNode:
    interval: tuple
    level: int
    weight: float
    span: float
    parent: int = -1
    children: list = field(default_factory=list)

    @property
    def kappa(self):
        return len(self.children)


@dataclass
class SplitTree:
    alpha: float
    k0: int
    depth: int
    nodes: list
    levels: list  # node indices per level

    def scale(self, level):
        return self.alpha ** (self.k0 + level)

    def level_weight_sums(self):
        return [math.fsum(self.nodes[i].weight for i in lv) for lv in self.levels]

    def level_max_weights(self):
        return [max(self.nodes[i].weight for i in lv) for lv in self.levels]

    def to_dict(self):
        return {"alpha": self.alpha, "k0": self.k0, "depth": self.depth,
                "level_weight_sums": self.level_weight_sums(),
                "nodes": [{"interval": list(n.interval), "level": n.level,
                           "weight": n.weight, "span": n.span, "parent": n.parent,
                           "kappa": n.kappa} for n in self.nodes]}


def _first_reach(poly, delta):
    """Earliest s < t (s at a vertex) with |gamma(s) - gamma(t)| = delta."""
    v = poly.vertices
    r2 = delta * delta
    for i in range(v.shape[0] - 1):
        if np.max(np.sum((v[i + 1:] - v[i]) ** 2, axis=1)) < r2:
            continue
        e, u = _first_exit_ball(v, i, 0.0, v[i].copy(), r2, False)
        if e >= 0:
            return poly.to_global(i, 0.0), poly.to_global(e, u)
    return None


def build_split_tree(curve, alpha, depth) -> SplitTree:
    """Recursive splitting across scales alpha^k down to ``depth`` levels.

    The root spans alpha^k0 with k0 the smallest k such that alpha^k is at most
    the curve diameter.  Node weights are products of 1/kappa over ancestors,
    so each level's weights sum to one.
    """
    poly = _as_polyline(curve)
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    if not 0.0 < alpha < poly.dim ** -0.5:
        raise ValueError(f"alpha must lie in (0, d^-1/2) = (0, {poly.dim ** -0.5:.6g})")
    diam = poly.diameter()
    if diam == 0.0:
        raise DegenerateCurve("curve has zero diameter")
    k0 = 0
    while alpha ** k0 > diam:
        k0 += 1
    found = _first_reach(poly, alpha ** k0)
    if found is None:
        raise DepthInfeasible("no pair of curve points at the root scale")
    s, t = found
    root = SplitNode((s, t), 0, 1.0, float(np.linalg.norm(poly.point(t) - poly.point(s))))
    nodes = [root]
    levels = [[0]]
    for level in range(depth):
        nxt = []
        for i in levels[level]:
            node = nodes[i]
            t0, t1 = node.interval
            sub = poly.subpath(t0, t1)
            if sub.span() == 0.0:
                raise DepthInfeasible(f"node at level {level} has coinciding endpoints")
            out = split_once(sub, alpha)
            if out.kappa == 0:
                raise DepthInfeasible(f"node at level {level} produced no sub-paths")
            w = node.weight / out.kappa
            for a, b in out.intervals:
                ga = t0 + a * (t1 - t0)
                gb = t0 + b * (t1 - t0)
                span = float(np.linalg.norm(sub.point(b) - sub.point(a)))
                node.children.append(len(nodes))
                nxt.append(len(nodes))
                nodes.append(SplitNode((ga, gb), level + 1, w, span, i))
            if len(nodes) > MAX_TREE_NODES:
                raise DepthInfeasible(f"tree exceeds {MAX_TREE_NODES} nodes")
        levels.append(nxt)
    return SplitTree(alpha, k0, depth, nodes, levels)


def energy_bound(tree: SplitTree, s, Delta):
    """(alpha^3 Delta)^-s * sum over levels of (max weight) * alpha^(-s l)."""
    a = tree.alpha
    terms = [w * a ** (-s * l) for l, w in enumerate(tree.level_max_weights())]
    return (a ** 3 * Delta) ** (-s) * math.fsum(terms)
