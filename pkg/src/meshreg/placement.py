"""Patch layouts: regular grids and contour-adaptive placement."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, minimum_spanning_tree

from .dtransform import DistanceField, EdgeMap
from .pu_model import Patch


@dataclass(frozen=True)
class PlacementConfig:
    """Spacing ``d``, regular radius ``r``, and the adaptive ``rho``/``kappa``."""

    spacing: float = 6.0
    radius: float = 20.0
    rho: float = 2.0
    kappa: float = 2.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.spacing <= 0 or self.radius <= 0:
            raise ValueError("spacing and radius must be positive")
        if self.rho < 1:
            raise ValueError("rho must be >= 1 so neighbouring patches overlap")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    @classmethod
    def regular_default(cls) -> "PlacementConfig":
        return cls(spacing=6.0, radius=20.0)

    @classmethod
    def adaptive_default(cls) -> "PlacementConfig":
        return cls(spacing=10.0, rho=2.0, kappa=2.0)

    @property
    def min_radius(self) -> float:
        return self.rho * self.spacing


def regular_patches(width: int, height: int, config: PlacementConfig) -> list[Patch]:
    """Grid of centers ``k * spacing`` for ``0 <= k * spacing <= extent``.

    Row-major (y outer, x inner).
    """
    if width <= 0 or height <= 0:
        raise ValueError("domain must be nonempty")
    d = config.spacing
    xs = d * np.arange(int(math.floor(width / d + 1e-9)) + 1)
    ys = d * np.arange(int(math.floor(height / d + 1e-9)) + 1)
    return [Patch((x, y), config.radius, config.alpha) for y in ys for x in xs]


# Clockwise neighbour ring in image coordinates (y down), starting west.
_RING = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)]


def _moore_trace(mask: np.ndarray, start: tuple[int, int]) -> list[tuple[int, int]]:
    """Outer boundary of the component containing ``start`` as (x, y) pixels."""
    h, w = mask.shape

    def fg(x, y):
        return 0 <= x < w and 0 <= y < h and mask[y, x]

    sx, sy = start
    # start is the first pixel in raster order, so its west neighbour is background
    back = 0
    path = [start]
    cur = start
    first_next = None
    for _ in range(8 * mask.sum() + 8):
        nxt = None
        for k in range(1, 9):
            idx = (back + k) % 8
            dx, dy = _RING[idx]
            if fg(cur[0] + dx, cur[1] + dy):
                nxt = (cur[0] + dx, cur[1] + dy)
                # next search starts from the background neighbour checked last
                pdx, pdy = _RING[(idx - 1) % 8]
                bx, by = cur[0] + pdx - nxt[0], cur[1] + pdy - nxt[1]
                back = _RING.index((bx, by)) if (bx, by) in _RING else (idx + 4) % 8
                break
        if nxt is None:  # isolated pixel
            return path
        if cur == start and first_next is None:
            first_next = nxt
        elif cur == start and nxt == first_next:
            return path[:-1]
        path.append(nxt)
        cur = nxt
    return path


def _step(a, b) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2)


def _samples_closed(path, d):
    out = [path[0]]
    arc = 0.0
    target = d
    n = len(path)
    total = sum(_step(path[i], path[(i + 1) % n]) for i in range(n))
    for i in range(1, n):
        arc += _step(path[i - 1], path[i])
        if arc >= target and target < total - 1e-9:
            out.append(path[i])
            while target <= arc:
                target += d
    return out


def _samples_tree(pixels, start_index, d):
    """Arc-length samples along every branch of a minimum spanning tree."""
    n = len(pixels)
    if n == 1:
        return [pixels[0]]
    pts = np.asarray(pixels)
    index = {p: i for i, p in enumerate(pixels)}
    rows, cols, vals = [], [], []
    for i, (x, y) in enumerate(pixels):
        for dx, dy in ((1, 0), (0, 1), (1, 1), (-1, 1)):
            j = index.get((x + dx, y + dy))
            if j is not None:
                rows.append(i)
                cols.append(j)
                vals.append(math.hypot(dx, dy))
    graph = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    tree = minimum_spanning_tree(graph)
    tree = tree + tree.T
    order, pred = breadth_first_order(tree, start_index, directed=False)
    dist = np.zeros(n)
    out = [pixels[start_index]]
    for v in order[1:]:
        u = pred[v]
        dist[v] = dist[u] + float(np.hypot(*(pts[v] - pts[u])))
        if math.floor(dist[v] / d) > math.floor(dist[u] / d):
            out.append(pixels[v])
    return out


def contour_arc_samples(edges: EdgeMap, d: float) -> list[tuple[float, float]]:
    """Points spaced ``d`` apart in arc length along each 8-connected component.

    Components are visited in raster order of their first pixel. Closed simple
    curves are walked by Moore-neighbour tracing from that pixel; open or
    branching components fall back to a walk over a minimum spanning tree of
    the pixel graph, sampled per branch. Every component yields at least one
    point.
    """
    if d <= 0:
        raise ValueError("spacing must be positive")
    mask = edges.values > 0
    if not mask.any():
        raise ValueError("no contour pixels")
    labels, n_comp = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    firsts = []
    for lab in range(1, n_comp + 1):
        ys, xs = np.nonzero(labels == lab)
        firsts.append((int(ys[0]), int(xs[0]), lab))
    firsts.sort()
    samples = []
    for y0, x0, lab in firsts:
        comp = labels == lab
        path = _moore_trace(comp, (x0, y0))
        closed = (
            len(path) > 2
            and len(set(path)) == len(path)
            and _step(path[-1], path[0]) < 1.5
        )
        if closed:
            pts = _samples_closed(path, d)
        else:
            ys, xs = np.nonzero(comp)
            pixels = list(zip(xs.tolist(), ys.tolist()))
            pts = _samples_tree(pixels, pixels.index((x0, y0)), d)
        samples.extend((float(x), float(y)) for x, y in pts)
    return samples


def adaptive_patches(edges: EdgeMap, dt_target: DistanceField, config: PlacementConfig) -> list[Patch]:
    """One patch per contour sample, radius ``max(rho * d, kappa * Pi_D(sample))``."""
    pts = contour_arc_samples(edges, config.spacing)
    r_min = config.min_radius
    patches = []
    for x, y in pts:
        r = max(r_min, config.kappa * float(dt_target.dist[int(y), int(x)]))
        patches.append(Patch((x, y), r, config.alpha))
    return patches
