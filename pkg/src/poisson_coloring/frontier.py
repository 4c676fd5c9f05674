"""Grid approximation of the discrete frontier, Hausdorff distances, islands.

A snapshot is sampled on the vertex lattice ``{0, 1/m, ..., 1}^d``; every
vertex takes the color of its exact nearest primitive (red on exact ties).
A cell belongs to the frontier when its ``2^d`` corners do not all share one
color.  Components use face adjacency.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import EmptySet, ResolutionTooLarge

BUDGET_ENV = "POISSON_COLORING_GRID_BUDGET"
DEFAULT_BUDGET = 1 << 28  # bytes of vertex storage


def grid_budget():
    raw = os.environ.get(BUDGET_ENV)
    return int(raw) if raw else DEFAULT_BUDGET


@dataclass(frozen=True)
class GridClassification:
    m: int
    colors: np.ndarray  # int8, shape (m+1,)*k, 0 = red, 1 = blue

    @property
    def delta(self):
        return 1.0 / self.m


@dataclass(frozen=True)
class FrontierCells:
    m: int
    cells: np.ndarray  # (K, k) int64, lexicographically sorted

    @property
    def delta(self):
        return 1.0 / self.m

    def __len__(self):
        return self.cells.shape[0]

    def centers(self):
        return (self.cells + 0.5) / self.m

    def mask(self):
        k = self.cells.shape[1]
        out = np.zeros((self.m,) * k, dtype=bool)
        if len(self):
            out[tuple(self.cells.T)] = True
        return out


@dataclass(frozen=True)
class ComponentReport:
    component_count: int
    component_sizes: list = field(default_factory=list)


def _check_budget(m, k):
    need = (m + 1) ** k
    if need > grid_budget():
        raise ResolutionTooLarge(
            f"{need} vertices at m={m} exceed the budget of {grid_budget()} "
            f"(set {BUDGET_ENV} to raise it)")


def classify_grid(snapshot, m, index=None):
    """Color every vertex of the (m+1)^d lattice by nearest primitive."""
    if m < 1:
        raise ValueError("m must be at least 1")
    d = snapshot.dimension
    _check_budget(m, d)
    index = snapshot.index() if index is None else index
    flat = index.classify_lattice(np.zeros(d), np.arange(d), m)
    return GridClassification(m, flat.reshape((m + 1,) * d))


def classify_slice(snapshot, m, axis, offset, plane_axes=None, anchor=None, index=None):
    """Color a 2-d lattice embedded in a plane of a d >= 3 snapshot.

    The plane spans ``plane_axes`` (default: the first two axes other than
    ``axis``); the ``axis`` coordinate is ``offset`` and any remaining
    coordinates come from ``anchor`` (default: the seed midpoint).
    """
    d = snapshot.dimension
    if plane_axes is None:
        plane_axes = [i for i in range(d) if i != axis][:2]
    plane_axes = list(plane_axes)
    if len(plane_axes) != 2 or axis in plane_axes:
        raise ValueError("plane_axes must be two axes distinct from the slicing axis")
    if not 0.0 <= offset <= 1.0:
        raise ValueError("slice offset must lie in [0, 1]")
    _check_budget(m, 2)
    if anchor is None:
        anchor = 0.5 * (np.asarray(snapshot.config.seed_red) + np.asarray(snapshot.config.seed_blue))
    origin = np.array(anchor, dtype=np.float64)
    origin[axis] = offset
    index = snapshot.index() if index is None else index
    flat = index.classify_lattice(origin, np.asarray(plane_axes), m)
    return GridClassification(m, flat.reshape(m + 1, m + 1))


def frontier_cells(classification: GridClassification) -> FrontierCells:
    """Cells whose corner vertices see both colors, in canonical order."""
    v = classification.colors
    k = v.ndim
    lo = None
    hi = None
    for corner in range(2 ** k):
        sl = tuple(slice(1, None) if (corner >> i) & 1 else slice(None, -1)
                   for i in range(k))
        c = v[sl]
        lo = c.copy() if lo is None else np.minimum(lo, c)
        hi = c.copy() if hi is None else np.maximum(hi, c)
    cells = np.argwhere(lo != hi).astype(np.int64)
    return FrontierCells(classification.m, cells)


def frontier_of(snapshot, m, index=None):
    return frontier_cells(classify_grid(snapshot, m, index=index))


def hausdorff_distance(A, B):
    """Exact Hausdorff distance between two finite point sets."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.size == 0 or B.size == 0:
        raise EmptySet("Hausdorff distance needs two nonempty sets")
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    dab, _ = cKDTree(B).query(A, k=1)
    dba, _ = cKDTree(A).query(B, k=1)
    return float(max(dab.max(), dba.max()))


def connected_components(cells: FrontierCells) -> ComponentReport:
    """Face-adjacency components of a frontier cell set."""
    if len(cells) == 0:
        return ComponentReport(0, [])
    labels, count = ndimage.label(cells.mask())
    sizes = np.bincount(labels.ravel())[1:]
    return ComponentReport(int(count), sorted((int(s) for s in sizes), reverse=True))


def frontier_convergence_series(snapshots, m):
    """Hausdorff distances between consecutive frontier cell-centre sets."""
    centers = [frontier_of(s, m).centers() for s in snapshots]
    return [hausdorff_distance(a, b) for a, b in zip(centers, centers[1:])]


def write_frontier(cells: FrontierCells, csv_path, json_path=None):
    k = cells.cells.shape[1] if len(cells) else 0
    with open(csv_path, "w") as fh:
        fh.write(",".join(f"i{j}" for j in range(k)) + "\n")
        for row in cells.cells:
            fh.write(",".join(str(int(v)) for v in row) + "\n")
    if json_path is not None:
        rep = connected_components(cells)
        stats = {"delta": cells.delta, "m": cells.m, "count": len(cells),
                 "component_count": rep.component_count,
                 "component_sizes": rep.component_sizes}
        with open(json_path, "w") as fh:
            json.dump(stats, fh, indent=2, sort_keys=True)
            fh.write("\n")
