"""Exact incremental nearest-neighbour search on [0,1]^d.

Both indices are uniform bucket grids stored as flat linked lists so that the
numba kernels below can insert and query without Python overhead.  The grid
starts with a single cell and doubles its resolution whenever the average
occupancy exceeds ``MAX_OCCUPANCY``.

Queries walk Chebyshev rings of cells around the query cell and stop once the
best squared distance is strictly below the squared distance to the outside of
the explored box (minus a small safety margin), so answers are exact.  All
comparisons use squared distances; ties are broken by the smallest key.

Colors are coded 0 (red) and 1 (blue).  A search returns the best slot and
squared distance *per color*; the overall winner is always exact, the loser's
entry is only an upper bound unless it ties with the winner.
"""

import math

import numpy as np
from numba import njit

from .errors import EmptyIndex

MAX_OCCUPANCY = 4
_EPS = 1e-12
_INF = np.inf


# --------------------------------------------------------------------------
# shared helpers
# --------------------------------------------------------------------------

@njit(cache=True)
def _cell_index(x, m):
    idx = 0
    stride = 1
    for i in range(x.shape[0]):
        ci = int(x[i] * m)
        if ci >= m:
            ci = m - 1
        elif ci < 0:
            ci = 0
        idx += ci * stride
        stride *= m
    return idx


@njit(cache=True)
def _home_cell(x, m, out):
    for i in range(x.shape[0]):
        ci = int(x[i] * m)
        if ci >= m:
            ci = m - 1
        elif ci < 0:
            ci = 0
        out[i] = ci


@njit(cache=True)
def _explored_bound(x, c, k, m):
    """Distance from x to the outside of the box of cells c-k..c+k.

    Returns -1.0 when the box already covers the whole grid.
    """
    h = 1.0 / m
    bound = _INF
    for i in range(x.shape[0]):
        lo = c[i] - k
        hi = c[i] + k
        if lo > 0:
            g = x[i] - lo * h
            if g < bound:
                bound = g
        if hi < m - 1:
            g = (hi + 1) * h - x[i]
            if g < bound:
                bound = g
    if bound == _INF:
        return -1.0
    return bound


@njit(cache=True)
def _ring_cell(c, off, k, m, cell):
    """Fill ``cell`` with c+off; False if outside the grid or not on ring k."""
    cheb = 0
    for i in range(c.shape[0]):
        v = c[i] + off[i]
        if v < 0 or v >= m:
            return False
        cell[i] = v
        a = off[i] if off[i] >= 0 else -off[i]
        if a > cheb:
            cheb = a
    return cheb == k


@njit(cache=True)
def _cell_min_sq(x, cell, m):
    h = 1.0 / m
    s = 0.0
    for i in range(x.shape[0]):
        lo = cell[i] * h
        hi = (cell[i] + 1) * h
        if x[i] < lo:
            t = lo - x[i]
            s += t * t
        elif x[i] > hi:
            t = x[i] - hi
            s += t * t
    return s


@njit(cache=True)
def _flat(cell, m):
    idx = 0
    stride = 1
    for i in range(cell.shape[0]):
        idx += cell[i] * stride
        stride *= m
    return idx


@njit(cache=True)
def _next_offset(off, k):
    """Advance the odometer over [-k, k]^d; False when exhausted."""
    for i in range(off.shape[0]):
        if off[i] < k:
            off[i] += 1
            return True
        off[i] = -k
    return False


@njit(cache=True)
def _sq_dist(x, p):
    s = 0.0
    for i in range(x.shape[0]):
        t = x[i] - p[i]
        s += t * t
    return s


@njit(cache=True)
def _seg_sq_dist(x, a, b, closest):
    """Squared distance from x to [a, b]; writes the closest point."""
    d = x.shape[0]
    den = 0.0
    num = 0.0
    for i in range(d):
        w = b[i] - a[i]
        den += w * w
        num += (x[i] - a[i]) * w
    if den == 0.0:
        t = 0.0
    else:
        t = num / den
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    s = 0.0
    for i in range(d):
        closest[i] = a[i] + t * (b[i] - a[i])
        u = x[i] - closest[i]
        s += u * u
    return s


# --------------------------------------------------------------------------
# point grid kernels
# --------------------------------------------------------------------------

@njit(cache=True)
def _point_rebuild(pos, nxt, count, m):
    d = pos.shape[1]
    head = np.full(m ** d, -1, np.int64)
    for s in range(count):
        cidx = _cell_index(pos[s], m)
        nxt[s] = head[cidx]
        head[cidx] = s
    return head


@njit(cache=True)
def point_insert(pos, col, key, nxt, head, m, count, p, color, k):
    """Insert at slot ``count``; returns (head, m, count).  Capacity is the caller's job."""
    d = pos.shape[1]
    for i in range(d):
        pos[count, i] = p[i]
    col[count] = color
    key[count] = k
    cidx = _cell_index(p, m)
    nxt[count] = head[cidx]
    head[cidx] = count
    count += 1
    if count > MAX_OCCUPANCY * m ** d:
        m *= 2
        head = _point_rebuild(pos, nxt, count, m)
    return head, m, count


@njit(cache=True)
def point_search(pos, col, key, nxt, head, m, x, filt):
    """Returns (slot_red, sq_red, slot_blue, sq_blue); filt is -1, 0 or 1."""
    d = x.shape[0]
    c = np.empty(d, np.int64)
    off = np.empty(d, np.int64)
    cell = np.empty(d, np.int64)
    _home_cell(x, m, c)
    sr = -1
    sb = -1
    qr = _INF
    qb = _INF
    k = 0
    while True:
        for i in range(d):
            off[i] = -k
        while True:
            if _ring_cell(c, off, k, m, cell):
                if filt == 0:
                    thr = qr
                elif filt == 1:
                    thr = qb
                else:
                    thr = qr if qr < qb else qb
                if _cell_min_sq(x, cell, m) <= thr:
                    s = head[_flat(cell, m)]
                    while s >= 0:
                        cs = col[s]
                        if filt < 0 or cs == filt:
                            q = _sq_dist(x, pos[s])
                            if cs == 0:
                                if q < qr or (q == qr and key[s] < key[sr]):
                                    qr = q
                                    sr = s
                            else:
                                if q < qb or (q == qb and key[s] < key[sb]):
                                    qb = q
                                    sb = s
                        s = nxt[s]
            if not _next_offset(off, k):
                break
        bound = _explored_bound(x, c, k, m)
        if bound < 0.0:
            break
        if filt == 0:
            best = qr
        elif filt == 1:
            best = qb
        else:
            best = qr if qr < qb else qb
        if bound > _EPS and best < (bound - _EPS) * (bound - _EPS):
            break
        k += 1
    return sr, qr, sb, qb


@njit(cache=True)
def point_classify_lattice(pos, col, key, nxt, head, m, origin, axes, mv):
    """Color the (mv+1)^len(axes) lattice origin + i/mv along ``axes``.

    Red wins exact ties.  Output is flat in C order (last axis fastest).
    """
    k = axes.shape[0]
    n = (mv + 1) ** k
    out = np.empty(n, np.int8)
    x = origin.copy()
    idx = np.zeros(k, np.int64)
    for flat in range(n):
        for j in range(k):
            x[axes[j]] = idx[j] / mv
        sr, qr, sb, qb = point_search(pos, col, key, nxt, head, m, x, -1)
        out[flat] = 0 if qr <= qb else 1
        j = k - 1
        while j >= 0:
            idx[j] += 1
            if idx[j] <= mv:
                break
            idx[j] = 0
            j -= 1
    return out


# --------------------------------------------------------------------------
# segment grid kernels
# --------------------------------------------------------------------------

@njit(cache=True)
def _register_segment(sa, sb, s, m, head, ent_seg, ent_next, ecount, stamp):
    """Register slot s in every cell its closed extent may touch.

    Candidate cells are the 3^d neighbourhoods of sample cells spaced at
    most h/2 apart; a candidate is kept when its centre lies within half a
    cell diagonal of the segment (a superset of the intersected cells).
    """
    d = sa.shape[1]
    h = 1.0 / m
    reach = 0.5 * h * math.sqrt(d) + _EPS
    reach_sq = reach * reach
    length = math.sqrt(_sq_dist(sa[s], sb[s]))
    nsamp = int(math.ceil(length / (0.5 * h))) + 1
    p = np.empty(d, np.float64)
    c = np.empty(d, np.int64)
    off = np.empty(d, np.int64)
    cell = np.empty(d, np.int64)
    centre = np.empty(d, np.float64)
    tmp = np.empty(d, np.float64)
    for j in range(nsamp):
        t = j / (nsamp - 1) if nsamp > 1 else 0.0
        for i in range(d):
            p[i] = sa[s, i] + t * (sb[s, i] - sa[s, i])
        _home_cell(p, m, c)
        for i in range(d):
            off[i] = -1
        while True:
            ok = True
            for i in range(d):
                v = c[i] + off[i]
                if v < 0 or v >= m:
                    ok = False
                    break
                cell[i] = v
            if ok:
                f = _flat(cell, m)
                if stamp[f] != s:
                    stamp[f] = s
                    for i in range(d):
                        centre[i] = (cell[i] + 0.5) * h
                    if _seg_sq_dist(centre, sa[s], sb[s], tmp) <= reach_sq:
                        if ecount >= ent_seg.shape[0]:
                            grown = np.empty(2 * ent_seg.shape[0], np.int64)
                            grown[:ecount] = ent_seg[:ecount]
                            ent_seg = grown
                            grown = np.empty(2 * ent_next.shape[0], np.int64)
                            grown[:ecount] = ent_next[:ecount]
                            ent_next = grown
                        ent_seg[ecount] = s
                        ent_next[ecount] = head[f]
                        head[f] = ecount
                        ecount += 1
            if not _next_offset(off, 1):
                break
    return ent_seg, ent_next, ecount


@njit(cache=True)
def _segment_rebuild(sa, sb, count, m, ent_seg, ent_next):
    d = sa.shape[1]
    head = np.full(m ** d, -1, np.int64)
    stamp = np.full(m ** d, -1, np.int64)
    ecount = 0
    for s in range(count):
        ent_seg, ent_next, ecount = _register_segment(
            sa, sb, s, m, head, ent_seg, ent_next, ecount, stamp)
    return head, stamp, ent_seg, ent_next, ecount


@njit(cache=True)
def segment_insert(sa, sb, col, key, head, stamp, ent_seg, ent_next, ecount,
                   m, count, a, b, color, k):
    """Insert [a, b] at slot ``count``.

    Returns (head, stamp, ent_seg, ent_next, ecount, m, count).
    """
    d = sa.shape[1]
    for i in range(d):
        sa[count, i] = a[i]
        sb[count, i] = b[i]
    col[count] = color
    key[count] = k
    ent_seg, ent_next, ecount = _register_segment(
        sa, sb, count, m, head, ent_seg, ent_next, ecount, stamp)
    count += 1
    if count > MAX_OCCUPANCY * m ** d:
        m *= 2
        head, stamp, ent_seg, ent_next, ecount = _segment_rebuild(
            sa, sb, count, m, ent_seg, ent_next)
    return head, stamp, ent_seg, ent_next, ecount, m, count


@njit(cache=True)
def segment_search(sa, sb, col, key, head, ent_seg, ent_next, m, x, filt):
    """Same contract as :func:`point_search`, over segments."""
    d = x.shape[0]
    c = np.empty(d, np.int64)
    off = np.empty(d, np.int64)
    cell = np.empty(d, np.int64)
    tmp = np.empty(d, np.float64)
    _home_cell(x, m, c)
    sr = -1
    sbl = -1
    qr = _INF
    qb = _INF
    k = 0
    while True:
        for i in range(d):
            off[i] = -k
        while True:
            if _ring_cell(c, off, k, m, cell):
                if filt == 0:
                    thr = qr
                elif filt == 1:
                    thr = qb
                else:
                    thr = qr if qr < qb else qb
                if _cell_min_sq(x, cell, m) <= thr:
                    e = head[_flat(cell, m)]
                    while e >= 0:
                        s = ent_seg[e]
                        cs = col[s]
                        if filt < 0 or cs == filt:
                            q = _seg_sq_dist(x, sa[s], sb[s], tmp)
                            if cs == 0:
                                if q < qr or (q == qr and key[s] < key[sr]):
                                    qr = q
                                    sr = s
                            else:
                                if q < qb or (q == qb and key[s] < key[sbl]):
                                    qb = q
                                    sbl = s
                        e = ent_next[e]
            if not _next_offset(off, k):
                break
        bound = _explored_bound(x, c, k, m)
        if bound < 0.0:
            break
        if filt == 0:
            best = qr
        elif filt == 1:
            best = qb
        else:
            best = qr if qr < qb else qb
        if bound > _EPS and best < (bound - _EPS) * (bound - _EPS):
            break
        k += 1
    return sr, qr, sbl, qb


@njit(cache=True)
def segment_classify_lattice(sa, sb, col, key, head, ent_seg, ent_next, m,
                             origin, axes, mv):
    k = axes.shape[0]
    n = (mv + 1) ** k
    out = np.empty(n, np.int8)
    x = origin.copy()
    idx = np.zeros(k, np.int64)
    for flat in range(n):
        for j in range(k):
            x[axes[j]] = idx[j] / mv
        sr, qr, sbl, qb = segment_search(sa, sb, col, key, head, ent_seg,
                                         ent_next, m, x, -1)
        out[flat] = 0 if qr <= qb else 1
        j = k - 1
        while j >= 0:
            idx[j] += 1
            if idx[j] <= mv:
                break
            idx[j] = 0
            j -= 1
    return out


@njit(cache=True)
def _point_nearest_batch(pos, col, key, nxt, head, m, xs, filt):
    n = xs.shape[0]
    slots = np.empty(n, np.int64)
    sqs = np.empty(n, np.float64)
    for j in range(n):
        sr, qr, sb, qb = point_search(pos, col, key, nxt, head, m, xs[j], filt)
        if filt == 0:
            slots[j] = sr
            sqs[j] = qr
        elif filt == 1:
            slots[j] = sb
            sqs[j] = qb
        elif sb < 0 or qr < qb or (qr == qb and sr >= 0 and key[sr] < key[sb]):
            slots[j] = sr
            sqs[j] = qr
        else:
            slots[j] = sb
            sqs[j] = qb
    return slots, sqs


# --------------------------------------------------------------------------
# Python wrappers
# --------------------------------------------------------------------------

def point_segment_distance(x, a, b):
    """Squared distance from ``x`` to segment [a, b] and the closest point."""
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    closest = np.empty_like(x)
    sq = _seg_sq_dist(x, a, b, closest)
    return float(sq), closest


def _filter_code(color_filter):
    if color_filter is None:
        return -1
    return int(color_filter)


def _pick(sr, qr, sb, qb, keys, filt):
    """Resolve per-color search results into (slot, sq) under smallest-key ties."""
    if filt == 0:
        return sr, qr
    if filt == 1:
        return sb, qb
    if sb < 0 or qr < qb:
        return sr, qr
    if sr < 0 or qb < qr:
        return sb, qb
    return (sr, qr) if keys[sr] < keys[sb] else (sb, qb)


class PointIndex:
    """Colored point set with exact nearest-neighbour queries."""

    def __init__(self, dim, capacity=64):
        self.dim = int(dim)
        capacity = max(int(capacity), 2)
        self.pos = np.empty((capacity, self.dim), np.float64)
        self.col = np.empty(capacity, np.int8)
        self.key = np.empty(capacity, np.int64)
        self.nxt = np.empty(capacity, np.int64)
        self.m = 1
        self.head = np.full(1, -1, np.int64)
        self.count = 0
        self.color_counts = [0, 0]

    def __len__(self):
        return self.count

    def reserve(self, extra):
        need = self.count + int(extra)
        cap = self.pos.shape[0]
        if need <= cap:
            return
        cap = max(need, 2 * cap)
        for name in ("pos", "col", "key", "nxt"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], old.dtype)
            new[: self.count] = old[: self.count]
            setattr(self, name, new)

    @classmethod
    def from_arrays(cls, positions, colors, keys=None):
        """Bulk-build a (frozen) index, sizing the grid directly."""
        positions = np.ascontiguousarray(positions, dtype=np.float64)
        n, dim = positions.shape
        index = cls(dim, capacity=max(n, 2))
        index.pos[:n] = positions
        index.col[:n] = colors
        index.key[:n] = np.arange(n) if keys is None else keys
        index.count = n
        m = 1
        while n > MAX_OCCUPANCY * m ** dim:
            m *= 2
        index.m = m
        index.head = _point_rebuild(index.pos, index.nxt, n, m)
        index.color_counts = [int(np.count_nonzero(index.col[:n] == 0)),
                              int(np.count_nonzero(index.col[:n] == 1))]
        return index

    def insert(self, position, color, site_id):
        p = np.asarray(position, dtype=np.float64)
        if p.shape != (self.dim,):
            raise ValueError(f"expected a {self.dim}-vector, got shape {p.shape}")
        self.reserve(1)
        self.head, self.m, self.count = point_insert(
            self.pos, self.col, self.key, self.nxt, self.head, self.m,
            self.count, p, int(color), int(site_id))
        self.color_counts[int(color)] += 1

    def search(self, x, color_filter=None):
        x = np.asarray(x, dtype=np.float64)
        return point_search(self.pos, self.col, self.key, self.nxt, self.head,
                            self.m, x, _filter_code(color_filter))

    def nearest(self, x, color_filter=None):
        """Exact nearest site as (site_id, squared_distance)."""
        filt = _filter_code(color_filter)
        if (self.count if filt < 0 else self.color_counts[filt]) == 0:
            raise EmptyIndex("no sites match the requested color filter")
        sr, qr, sb, qb = self.search(x, color_filter)
        slot, sq = _pick(sr, qr, sb, qb, self.key, filt)
        return int(self.key[slot]), float(sq)

    def nearest_batch(self, xs, color_filter=None):
        """Vectorised :meth:`nearest`; returns (site_ids, squared_distances)."""
        filt = _filter_code(color_filter)
        if (self.count if filt < 0 else self.color_counts[filt]) == 0:
            raise EmptyIndex("no sites match the requested color filter")
        xs = np.ascontiguousarray(xs, dtype=np.float64)
        slots, sqs = _point_nearest_batch(self.pos, self.col, self.key,
                                          self.nxt, self.head, self.m, xs, filt)
        return self.key[slots], sqs

    def classify_lattice(self, origin, axes, mv):
        return point_classify_lattice(
            self.pos, self.col, self.key, self.nxt, self.head, self.m,
            np.asarray(origin, dtype=np.float64), np.asarray(axes, dtype=np.int64),
            int(mv))


class SegmentIndex:
    """Colored segment union with exact nearest-point queries."""

    def __init__(self, dim, capacity=64):
        self.dim = int(dim)
        capacity = max(int(capacity), 2)
        self.sa = np.empty((capacity, self.dim), np.float64)
        self.sb = np.empty((capacity, self.dim), np.float64)
        self.col = np.empty(capacity, np.int8)
        self.key = np.empty(capacity, np.int64)
        self.m = 1
        self.head = np.full(1, -1, np.int64)
        self.stamp = np.full(1, -1, np.int64)
        self.ent_seg = np.empty(4 * capacity, np.int64)
        self.ent_next = np.empty(4 * capacity, np.int64)
        self.ecount = 0
        self.count = 0
        self.color_counts = [0, 0]

    def __len__(self):
        return self.count

    def reserve(self, extra):
        need = self.count + int(extra)
        cap = self.sa.shape[0]
        if need <= cap:
            return
        cap = max(need, 2 * cap)
        for name in ("sa", "sb", "col", "key"):
            old = getattr(self, name)
            new = np.empty((cap,) + old.shape[1:], old.dtype)
            new[: self.count] = old[: self.count]
            setattr(self, name, new)

    @classmethod
    def from_arrays(cls, a, b, colors, keys=None):
        a = np.ascontiguousarray(a, dtype=np.float64)
        b = np.ascontiguousarray(b, dtype=np.float64)
        n, dim = a.shape
        index = cls(dim, capacity=max(n, 2))
        index.sa[:n] = a
        index.sb[:n] = b
        index.col[:n] = colors
        index.key[:n] = np.arange(n) if keys is None else keys
        index.count = n
        m = 1
        while n > MAX_OCCUPANCY * m ** dim:
            m *= 2
        index.m = m
        (index.head, index.stamp, index.ent_seg, index.ent_next,
         index.ecount) = _segment_rebuild(index.sa, index.sb, n, m,
                                          index.ent_seg, index.ent_next)
        index.color_counts = [int(np.count_nonzero(index.col[:n] == 0)),
                              int(np.count_nonzero(index.col[:n] == 1))]
        return index

    def insert(self, a, b, color, segment_id):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        self.reserve(1)
        (self.head, self.stamp, self.ent_seg, self.ent_next, self.ecount,
         self.m, self.count) = segment_insert(
            self.sa, self.sb, self.col, self.key, self.head, self.stamp,
            self.ent_seg, self.ent_next, self.ecount, self.m, self.count,
            a, b, int(color), int(segment_id))
        self.color_counts[int(color)] += 1

    def search(self, x, color_filter=None):
        x = np.asarray(x, dtype=np.float64)
        return segment_search(self.sa, self.sb, self.col, self.key, self.head,
                              self.ent_seg, self.ent_next, self.m, x,
                              _filter_code(color_filter))

    def nearest(self, x, color_filter=None):
        """Exact nearest segment as (segment_id, squared_distance, closest_point)."""
        filt = _filter_code(color_filter)
        if (self.count if filt < 0 else self.color_counts[filt]) == 0:
            raise EmptyIndex("no segments match the requested color filter")
        x = np.asarray(x, dtype=np.float64)
        sr, qr, sb, qb = self.search(x, color_filter)
        slot, sq = _pick(sr, qr, sb, qb, self.key, filt)
        closest = np.empty(self.dim)
        _seg_sq_dist(x, self.sa[slot], self.sb[slot], closest)
        return int(self.key[slot]), float(sq), closest

    def classify_lattice(self, origin, axes, mv):
        return segment_classify_lattice(
            self.sa, self.sb, self.col, self.key, self.head, self.ent_seg,
            self.ent_next, self.m, np.asarray(origin, dtype=np.float64),
            np.asarray(axes, dtype=np.int64), int(mv))
