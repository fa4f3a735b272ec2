"""Exact unsigned Euclidean distance transforms of edge maps."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels


class EmptyContourError(ValueError):
    """Raised when an edge map has no contour pixels."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EdgeMap:
    """Raster of contour weights in [0, 1], indexed ``values[row, col]``.

    After edge detection every value is exactly 0 or 1. Grayscale values are
    admitted where a soft (interpolated) edge map is wanted.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("edge map must be 2-D")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("edge map values must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def mass(self) -> float:
        return float(self.values.sum())

    def is_binary(self) -> bool:
        return bool(np.all((self.values == 0) | (self.values == 1)))

    def is_empty(self) -> bool:
        return not np.any(self.values > 0)

    def points(self) -> np.ndarray:
        """(n, 2) array of (x, y) coordinates of the nonzero pixels, row-major order."""
        rows, cols = np.nonzero(self.values)
        return np.column_stack([cols, rows]).astype(np.float64)

    @classmethod
    def from_image(cls, image, threshold: float = 128) -> "EdgeMap":
        """Binarize: a pixel is on the contour iff its intensity >= threshold."""
        return cls((np.asarray(image) >= threshold).astype(np.float64))

    @classmethod
    def from_points(cls, shape, points) -> "EdgeMap":
        v = np.zeros(shape)
        pts = np.asarray(points, dtype=int).reshape(-1, 2)
        v[pts[:, 1], pts[:, 0]] = 1.0
        return cls(v)


@dataclass(frozen=True)
class DistanceField:
    """Distance (pixels) from every pixel to the nearest contour pixel of ``source``."""

    dist: np.ndarray
    source: EdgeMap = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "dist", _frozen(self.dist))

    @property
    def height(self) -> int:
        return self.dist.shape[0]

    @property
    def width(self) -> int:
        return self.dist.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.dist.shape

    def to_csv(self, path) -> None:
        """Row-major CSV, one raster row per line, 6 decimals."""
        np.savetxt(path, self.dist, fmt="%.6f", delimiter=",")


def compute_distance_transform(edges: EdgeMap) -> DistanceField:
    """Exact Euclidean distance transform of the contour pixels of ``edges``.

    Any pixel with a positive value counts as a contour pixel. Uses the
    two-pass lower-envelope algorithm on squared distances, so the result is
    exact up to the final square root.
    """
    mask = np.ascontiguousarray(edges.values > 0, dtype=np.uint8)
    if not mask.any():
        raise EmptyContourError("no contour pixels")
    d2 = kernels.edt_squared(mask)
    return DistanceField(np.sqrt(d2), edges)


def gradient_grid(field: DistanceField) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of the distance at every pixel.

    Returns ``(gx, gy)``; both are zero on the one-pixel border, where a
    central difference is not defined.
    """
    d = field.dist
    gx = np.zeros_like(d)
    gy = np.zeros_like(d)
    gx[1:-1, 1:-1] = 0.5 * (d[1:-1, 2:] - d[1:-1, :-2])
    gy[1:-1, 1:-1] = 0.5 * (d[2:, 1:-1] - d[:-2, 1:-1])
    return gx, gy


def sample_gradient(field: DistanceField, x) -> np.ndarray:
    """Gradient of the distance at continuous position ``x = (col, row)``.

    Bilinear interpolation of per-pixel central differences. Not normalized.
    """
    px, py = float(x[0]), float(x[1])
    h, w = field.shape
    if not (1 <= px <= w - 2 and 1 <= py <= h - 2):
        raise ValueError(f"gradient out of bounds at ({px}, {py})")
    gx, gy = gradient_grid(field)
    x0 = min(int(np.floor(px)), w - 3)
    y0 = min(int(np.floor(py)), h - 3)
    fx, fy = px - x0, py - y0

    def interp(g):
        return ((1 - fy) * ((1 - fx) * g[y0, x0] + fx * g[y0, x0 + 1])
                + fy * ((1 - fx) * g[y0 + 1, x0] + fx * g[y0 + 1, x0 + 1]))

    return np.array([interp(gx), interp(gy)])
