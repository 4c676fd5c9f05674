"""The coloring dynamics: point model, segment model, discrete or Poisson time.

Site ids double as index slots: ``0`` is the red seed, ``1`` the blue seed and
arrival ``n`` (1-based) gets id ``n + 1``.  In the segment model every site
owns exactly one segment with the same id; seeds own zero-length segments.

Randomness comes from two PCG64 streams derived from
``SeedSequence(rng_seed, spawn_key=(stream, 0))`` (positions) and
``spawn_key=(stream, 1)`` (Poisson clock), so positions do not depend on the
time mode and replicate ``r`` of an experiment simply uses ``stream=r``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field, asdict, replace
from typing import Optional, Sequence

import numpy as np
from numba import njit

from . import nn_index
from .errors import ClockExhausted, InvalidConfig
from .nn_index import PointIndex, SegmentIndex

SCHEMA_VERSION = 1
NO_PARENT = -1
_BLOCK = 8192


class Color(enum.IntEnum):
    RED = 0
    BLUE = 1


def default_seeds(dimension):
    red = [0.5] * dimension
    blue = [0.5] * dimension
    red[0] = 0.25
    blue[0] = 0.75
    return tuple(red), tuple(blue)


@dataclass(frozen=True)
class ProcessConfig:
    dimension: int = 2
    model: str = "point"
    seed_red: Optional[tuple] = None
    seed_blue: Optional[tuple] = None
    n_points: Optional[int] = None
    t_max: Optional[float] = None
    time_mode: str = "discrete"
    rng_seed: int = 0
    stream: int = 0
    checkpoints: tuple = ()

    def __post_init__(self):
        if not isinstance(self.dimension, (int, np.integer)) or self.dimension < 1:
            raise InvalidConfig(f"dimension must be a positive integer, got {self.dimension!r}")
        if self.model not in ("point", "segment"):
            raise InvalidConfig(f"unknown model {self.model!r}")
        if self.time_mode not in ("discrete", "poisson"):
            raise InvalidConfig(f"unknown time mode {self.time_mode!r}")
        red_default, blue_default = default_seeds(self.dimension)
        object.__setattr__(self, "seed_red", _as_point(self.seed_red, red_default, self.dimension))
        object.__setattr__(self, "seed_blue", _as_point(self.seed_blue, blue_default, self.dimension))
        for name in ("seed_red", "seed_blue"):
            if any(not (0.0 <= v <= 1.0) for v in getattr(self, name)):
                raise InvalidConfig(f"{name} lies outside the unit cube")
        if self.seed_red == self.seed_blue:
            raise InvalidConfig("red and blue seeds coincide")
        if (self.n_points is None) == (self.t_max is None):
            raise InvalidConfig("exactly one of n_points and t_max must be set")
        if self.n_points is not None and self.n_points < 0:
            raise InvalidConfig("n_points must be nonnegative")
        if self.t_max is not None:
            if self.time_mode != "poisson":
                raise InvalidConfig("t_max requires time_mode='poisson'")
            if not self.t_max > 0:
                raise InvalidConfig("t_max must be positive")
        if self.rng_seed < 0 or self.rng_seed >= 2 ** 64:
            raise InvalidConfig("rng_seed must fit in an unsigned 64-bit integer")
        if self.stream < 0:
            raise InvalidConfig("stream must be nonnegative")
        object.__setattr__(self, "checkpoints", tuple(sorted(int(c) for c in self.checkpoints)))
        if self.n_points is not None and any(c < 0 or c > self.n_points for c in self.checkpoints):
            raise InvalidConfig("checkpoints must lie in [0, n_points]")

    def to_dict(self):
        d = asdict(self)
        d["seed_red"] = list(self.seed_red)
        d["seed_blue"] = list(self.seed_blue)
        d["checkpoints"] = list(self.checkpoints)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for name in ("seed_red", "seed_blue"):
            if d.get(name) is not None:
                d[name] = tuple(float(v) for v in d[name])
        if "checkpoints" in d:
            d["checkpoints"] = tuple(d["checkpoints"])
        return cls(**d)

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def rng_streams(self):
        pos = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(self.rng_seed, spawn_key=(self.stream, 0))))
        clock = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(self.rng_seed, spawn_key=(self.stream, 1))))
        return pos, clock


def _as_point(value, default, dimension):
    if value is None:
        return default
    pt = tuple(float(v) for v in value)
    if len(pt) != dimension:
        raise InvalidConfig(f"seed has {len(pt)} coordinates, expected {dimension}")
    return pt


@dataclass(frozen=True)
class ColoredSite:
    id: int
    position: tuple
    color: Color
    arrival_index: int
    arrival_time: Optional[float] = None
    parent_id: Optional[int] = None


@dataclass(frozen=True)
class SegmentPrimitive:
    id: int
    a: tuple
    b: tuple
    color: Color
    owner_site: int


@dataclass(frozen=True)
class ColorEvent:
    new_site: ColoredSite
    new_segment: Optional[SegmentPrimitive] = None


@dataclass
class ProcessStats:
    ties: int = 0
    redraws: int = 0


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------

@njit(cache=True)
def _advance_points(X, pos, col, key, nxt, head, m, count, parent, ties):
    """Color and insert every row of X; stops early on an exact duplicate.

    Returns (head, m, count, ties, stop) with stop = -1 or the offending row.
    """
    for j in range(X.shape[0]):
        x = X[j]
        sr, qr, sb, qb = nn_index.point_search(pos, col, key, nxt, head, m, x, -1)
        if qr <= qb:
            c = 0
            s = sr
            best = qr
        else:
            c = 1
            s = sb
            best = qb
        if best == 0.0:
            return head, m, count, ties, j
        if qr == qb:
            ties += 1
        parent[count] = key[s]
        head, m, count = nn_index.point_insert(pos, col, key, nxt, head, m, count,
                                               x, c, count)
    return head, m, count, ties, -1


@njit(cache=True)
def _advance_segments(X, sa, sb, col, key, head, stamp, ent_seg, ent_next,
                      ecount, m, count, pos, parent, ties):
    d = X.shape[1]
    y = np.empty(d, np.float64)
    for j in range(X.shape[0]):
        x = X[j]
        sr, qr, sbl, qb = nn_index.segment_search(sa, sb, col, key, head,
                                                  ent_seg, ent_next, m, x, -1)
        if qr <= qb:
            c = 0
            s = sr
            best = qr
        else:
            c = 1
            s = sbl
            best = qb
        if best == 0.0:
            return head, stamp, ent_seg, ent_next, ecount, m, count, ties, j
        if qr == qb:
            ties += 1
        nn_index._seg_sq_dist(x, sa[s], sb[s], y)
        parent[count] = key[s]
        for i in range(d):
            pos[count, i] = x[i]
        head, stamp, ent_seg, ent_next, ecount, m, count = nn_index.segment_insert(
            sa, sb, col, key, head, stamp, ent_seg, ent_next, ecount, m, count,
            y, x, c, count)
    return head, stamp, ent_seg, ent_next, ecount, m, count, ties, -1


# --------------------------------------------------------------------------
# state
# --------------------------------------------------------------------------

class ProcessState:
    """Mutable, single-writer simulation state.  Build with :func:`init_process`."""

    def __init__(self, config: ProcessConfig, capacity=None):
        self.config = config
        self.stats = ProcessStats()
        d = config.dimension
        if capacity is None:
            capacity = (config.n_points if config.n_points is not None
                        else int(config.t_max + 10 * math.sqrt(config.t_max) + 10)) + 2
        capacity = max(int(capacity), 2)
        self._pos_rng, self._clock_rng = config.rng_streams()
        self._buffer = np.empty((0, d))
        self._buf_at = 0
        self.clock = 0.0
        self.exhausted = False
        self.parent = np.empty(capacity, np.int64)
        self.times = np.empty(capacity, np.float64)
        seeds = np.array([config.seed_red, config.seed_blue], dtype=np.float64)
        if config.model == "point":
            self.index = PointIndex(d, capacity)
            self.index.insert(seeds[0], Color.RED, 0)
            self.index.insert(seeds[1], Color.BLUE, 1)
        else:
            self.index = SegmentIndex(d, capacity)
            self.index.insert(seeds[0], seeds[0], Color.RED, 0)
            self.index.insert(seeds[1], seeds[1], Color.BLUE, 1)
            self._pos = np.empty((capacity, d), np.float64)
            self._pos[:2] = seeds
        self.parent[:2] = NO_PARENT
        self.times[:2] = 0.0 if config.time_mode == "poisson" else np.nan

    # -- bookkeeping -------------------------------------------------------

    @property
    def n_sites(self):
        return self.index.count

    @property
    def n_arrivals(self):
        return self.index.count - 2

    @property
    def positions(self):
        if self.config.model == "point":
            return self.index.pos[: self.n_sites]
        return self._pos[: self.n_sites]

    @property
    def colors(self):
        return self.index.col[: self.n_sites]

    def _reserve(self, extra):
        self.index.reserve(extra)
        need = self.n_sites + extra
        if need > self.parent.shape[0]:
            cap = max(need, 2 * self.parent.shape[0])
            self.parent = _grow(self.parent, cap, self.n_sites)
            self.times = _grow(self.times, cap, self.n_sites)
            if self.config.model == "segment":
                self._pos = _grow(self._pos, cap, self.n_sites)

    def _take_positions(self, k):
        d = self.config.dimension
        out = np.empty((k, d))
        got = 0
        while got < k:
            if self._buf_at >= self._buffer.shape[0]:
                self._buffer = self._pos_rng.random((_BLOCK, d))
                self._buf_at = 0
            take = min(k - got, self._buffer.shape[0] - self._buf_at)
            out[got:got + take] = self._buffer[self._buf_at:self._buf_at + take]
            self._buf_at += take
            got += take
        return out

    def _insert_block(self, k):
        """Place the next k arrivals (positions only; times are set by the caller)."""
        self._reserve(k)
        target = self.n_sites + k
        while self.n_sites < target:
            X = self._take_positions(target - self.n_sites)
            stop = self._run_kernel(X)
            if stop >= 0:
                # exact coincidence with an existing primitive: discard the draw
                self.stats.redraws += 1
                rest = X[stop + 1:]
                if rest.shape[0]:
                    # hand the unused draws back so the stream stays sequential
                    self._buffer = np.concatenate([rest, self._buffer[self._buf_at:]])
                    self._buf_at = 0

    def _run_kernel(self, X):
        ix = self.index
        before = ix.count
        if self.config.model == "point":
            ix.head, ix.m, ix.count, ties, stop = _advance_points(
                X, ix.pos, ix.col, ix.key, ix.nxt, ix.head, ix.m, ix.count,
                self.parent, self.stats.ties)
        else:
            (ix.head, ix.stamp, ix.ent_seg, ix.ent_next, ix.ecount, ix.m,
             ix.count, ties, stop) = _advance_segments(
                X, ix.sa, ix.sb, ix.col, ix.key, ix.head, ix.stamp, ix.ent_seg,
                ix.ent_next, ix.ecount, ix.m, ix.count, self._pos, self.parent,
                self.stats.ties)
        self.stats.ties = ties
        red = int(np.count_nonzero(ix.col[before:ix.count] == 0))
        ix.color_counts[0] += red
        ix.color_counts[1] += ix.count - before - red
        return stop

    # -- advancing -----------------------------------------------------------

    def advance(self, k):
        """Add k arrivals (discrete bookkeeping; Poisson times drawn as well)."""
        if k <= 0:
            return
        start = self.n_sites
        if self.config.time_mode == "poisson":
            e = self._clock_rng.standard_exponential(k)
            e[0] += self.clock
            t = np.cumsum(e)
            self._insert_block(k)
            self.times[start:start + k] = t
            self.clock = float(t[-1])
        else:
            self._insert_block(k)
            self.times[start:start + k] = np.nan

    def advance_until(self, t_max):
        """Poisson mode: add every arrival with time <= t_max."""
        while not self.exhausted:
            e = self._clock_rng.standard_exponential(_BLOCK)
            e[0] += self.clock
            t = np.cumsum(e)
            k = int(np.searchsorted(t, t_max, side="right"))
            if k:
                start = self.n_sites
                self._insert_block(k)
                self.times[start:start + k] = t[:k]
            if k < _BLOCK:
                self.clock = float(t_max)
                self.exhausted = True
            else:
                self.clock = float(t[-1])

    def snapshot(self, copy=True):
        n = self.n_sites
        take = (lambda a: a[:n].copy()) if copy else (lambda a: a[:n])
        segs = None
        if self.config.model == "segment":
            segs = (take(self.index.sa), take(self.index.sb))
        cfg = self.config
        return Snapshot(cfg, take(self.positions), take(self.colors),
                        take(self.parent), take(self.times), segs,
                        stats=ProcessStats(self.stats.ties, self.stats.redraws))


def _grow(arr, cap, n):
    new = np.empty((cap,) + arr.shape[1:], arr.dtype)
    new[:n] = arr[:n]
    return new


def init_process(config: ProcessConfig) -> ProcessState:
    """Fresh state holding only the two seeds, clock at zero."""
    if not isinstance(config, ProcessConfig):
        raise InvalidConfig("expected a ProcessConfig")
    return ProcessState(config)


def step(state: ProcessState) -> ColorEvent:
    """One arrival: draw, color by nearest primitive, insert."""
    cfg = state.config
    start = state.n_sites
    if cfg.time_mode == "poisson":
        if state.exhausted:
            raise ClockExhausted("clock already reached t_max")
        e = float(state._clock_rng.standard_exponential())
        t = state.clock + e
        if cfg.t_max is not None and t > cfg.t_max:
            state.clock = float(cfg.t_max)
            state.exhausted = True
            raise ClockExhausted(f"next arrival at {t:.6g} exceeds t_max={cfg.t_max}")
        state._insert_block(1)
        state.times[start] = t
        state.clock = t
    else:
        state._insert_block(1)
        state.times[start] = np.nan
    site = _site_from(state.positions, state.colors, state.parent, state.times, start)
    seg = None
    if cfg.model == "segment":
        seg = SegmentPrimitive(start, tuple(state.index.sa[start].tolist()),
                               tuple(state.index.sb[start].tolist()),
                               site.color, start)
    return ColorEvent(site, seg)


def run(config: ProcessConfig) -> "Snapshot":
    """Run to ``n_points`` arrivals or until the clock passes ``t_max``."""
    state = init_process(config)
    if config.n_points is not None:
        state.advance(config.n_points)
    else:
        state.advance_until(config.t_max)
    snap = state.snapshot(copy=False)
    return snap


def _site_from(positions, colors, parent, times, i):
    t = float(times[i])
    p = int(parent[i])
    return ColoredSite(
        id=i,
        position=tuple(positions[i].tolist()),
        color=Color(int(colors[i])),
        arrival_index=max(i - 1, 0),
        arrival_time=None if math.isnan(t) else t,
        parent_id=None if p == NO_PARENT else p,
    )


# --------------------------------------------------------------------------
# snapshot
# --------------------------------------------------------------------------

class _SiteView(Sequence):
    def __init__(self, snap):
        self._s = snap

    def __len__(self):
        return self._s.n_sites

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        s = self._s
        return _site_from(s.positions, s.colors, s.parent, s.times, i)


class _SegmentView(Sequence):
    def __init__(self, snap):
        self._s = snap

    def __len__(self):
        return 0 if self._s.seg_a is None else self._s.n_sites

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        s = self._s
        return SegmentPrimitive(i, tuple(s.seg_a[i].tolist()), tuple(s.seg_b[i].tolist()),
                                Color(int(s.colors[i])), i)


class Snapshot:
    """Immutable record of a run, stored column-wise.

    ``sites`` and ``segments`` expose record views; the arrays are read-only.
    """

    schema_version = SCHEMA_VERSION

    def __init__(self, config, positions, colors, parent, times, segments=None,
                 stats=None):
        self.config = config
        self.positions = _frozen(positions)
        self.colors = _frozen(colors)
        self.parent = _frozen(parent)
        self.times = _frozen(times)
        if segments is None:
            self.seg_a = self.seg_b = None
        else:
            self.seg_a = _frozen(segments[0])
            self.seg_b = _frozen(segments[1])
        self.stats = stats or ProcessStats()

    @property
    def n_sites(self):
        return self.positions.shape[0]

    @property
    def n_arrivals(self):
        return self.n_sites - 2

    @property
    def dimension(self):
        return self.config.dimension

    @property
    def sites(self):
        return _SiteView(self)

    @property
    def segments(self):
        return _SegmentView(self)

    @property
    def arrival_index(self):
        return np.maximum(np.arange(self.n_sites) - 1, 0)

    def prefix(self, n):
        """Snapshot after the first n arrivals of the same trajectory."""
        if not 0 <= n <= self.n_arrivals:
            raise ValueError(f"prefix length {n} outside [0, {self.n_arrivals}]")
        k = n + 2
        cfg = replace(self.config, n_points=n, t_max=None,
                      checkpoints=tuple(c for c in self.config.checkpoints if c <= n))
        segs = None if self.seg_a is None else (self.seg_a[:k], self.seg_b[:k])
        return Snapshot(cfg, self.positions[:k], self.colors[:k], self.parent[:k],
                        self.times[:k], segs, stats=self.stats)

    def checkpoint_snapshots(self):
        return [self.prefix(c) for c in self.config.checkpoints]

    def index(self):
        """Frozen nearest-neighbour index over all primitives of this snapshot."""
        if self.seg_a is None:
            return PointIndex.from_arrays(self.positions, self.colors)
        return SegmentIndex.from_arrays(self.seg_a, self.seg_b, self.colors)

    def __eq__(self, other):
        if not isinstance(other, Snapshot):
            return NotImplemented
        from .snapshot_io import snapshot_bytes
        return snapshot_bytes(self) == snapshot_bytes(other)

    __hash__ = None


def _frozen(a):
    a = np.asarray(a)
    a.flags.writeable = False
    return a
