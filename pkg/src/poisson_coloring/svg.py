"""SVG rendering of planar snapshots.

The unit square maps to a ``size`` x ``size`` canvas with y pointing up.
Sites become ``<circle>`` elements; in the segment model every segment,
including the zero-length seed segments, is one ``<path>``.  An optional
frontier overlay draws its cells as ``<rect>`` elements in a separate group.
"""

from xml.sax.saxutils import quoteattr

import numpy as np

from .errors import UnsupportedDimension

PALETTE = ("#d62728", "#1f77b4")  # red, blue
FRONTIER_FILL = "#222222"


def _fmt(v):
    return f"{v:.3f}".rstrip("0").rstrip(".")


def render_svg(snapshot, size=800, radius=None, frontier=None, title=None):
    """SVG document for a d = 2 snapshot, as a string."""
    if snapshot.dimension != 2:
        raise UnsupportedDimension(f"rendering needs d = 2, got d = {snapshot.dimension}")
    n = snapshot.n_sites
    if radius is None:
        radius = max(0.4, min(4.0, 0.6 * size / np.sqrt(max(n, 1))))
    pos = np.asarray(snapshot.positions, dtype=np.float64)
    xs = pos[:, 0] * size
    ys = (1.0 - pos[:, 1]) * size
    cols = np.asarray(snapshot.colors)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">']
    if title:
        out.append(f"<title>{title}</title>")
    out.append(f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>')

    if snapshot.seg_a is not None:
        a = snapshot.seg_a
        b = snapshot.seg_b
        width = _fmt(max(0.3, radius * 0.6))
        for c in (0, 1):
            out.append(f'<g id="segments-{c}" stroke={quoteattr(PALETTE[c])} '
                       f'stroke-width="{width}" fill="none">')
            for i in np.flatnonzero(cols == c):
                out.append(f'<path d="M{_fmt(a[i, 0] * size)} {_fmt((1 - a[i, 1]) * size)}'
                           f'L{_fmt(b[i, 0] * size)} {_fmt((1 - b[i, 1]) * size)}"/>')
            out.append("</g>")

    r = _fmt(radius)
    for c in (0, 1):
        out.append(f'<g id="sites-{c}" fill={quoteattr(PALETTE[c])}>')
        for i in np.flatnonzero(cols == c):
            out.append(f'<circle cx="{_fmt(xs[i])}" cy="{_fmt(ys[i])}" r="{r}"/>')
        out.append("</g>")

    if frontier is not None and len(frontier):
        w = size / frontier.m
        out.append(f'<g id="frontier" fill="{FRONTIER_FILL}" fill-opacity="0.6">')
        for i, j in frontier.cells:
            out.append(f'<rect x="{_fmt(i * w)}" y="{_fmt(size - (j + 1) * w)}" '
                       f'width="{_fmt(w)}" height="{_fmt(w)}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(snapshot, path, **kwargs):
    with open(path, "w") as fh:
        fh.write(render_svg(snapshot, **kwargs))
