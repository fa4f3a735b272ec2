"""Symmetric variational chamfer energy and its simplified gradient field."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dtransform import DistanceField, EdgeMap, EmptyContourError, gradient_grid
from .pu_model import MeshlessModel


@dataclass(frozen=True)
class EnergyBreakdown:
    forward: float
    backward: float
    a_s: float
    a_d: float

    @property
    def total(self) -> float:
        return self.forward + self.backward


@dataclass(frozen=True)
class GradientField:
    """Per-pixel force ``J~``; ``jx[row, col]``, ``jy[row, col]``."""

    jx: np.ndarray
    jy: np.ndarray

    @property
    def height(self) -> int:
        return self.jx.shape[0]

    @property
    def width(self) -> int:
        return self.jx.shape[1]

    def max_norm(self) -> float:
        return float(np.max(np.hypot(self.jx, self.jy)))

    def __add__(self, other: "GradientField") -> "GradientField":
        return GradientField(self.jx + other.jx, self.jy + other.jy)

    def scaled(self, k: float) -> "GradientField":
        return GradientField(k * self.jx, k * self.jy)

    def to_csv(self, path) -> None:
        h, w = self.jx.shape
        ys, xs = np.mgrid[0:h, 0:w]
        table = np.column_stack([xs.ravel(), ys.ravel(), self.jx.ravel(), self.jy.ravel()])
        np.savetxt(path, table, fmt=["%d", "%d", "%.6f", "%.6f"], delimiter=",",
                   header="x,y,jx,jy", comments="")


def _check_shapes(*rasters):
    shapes = {r.shape for r in rasters}
    if len(shapes) != 1:
        raise ValueError(f"raster dimensions differ: {sorted(shapes)}")


def data_energy(warped_source: EdgeMap, target: EdgeMap, dt_target: DistanceField,
                dt_warped: DistanceField) -> EnergyBreakdown:
    """Length-normalized forward and backward chamfer energies (pixel sums)."""
    _check_shapes(warped_source, target, dt_target, dt_warped)
    s, d = warped_source.values, target.values
    a_s, a_d = float(s.sum()), float(d.sum())
    if a_s <= 0 or a_d <= 0:
        raise EmptyContourError("no contour pixels")
    forward = float(np.sum(s * dt_target.dist ** 2)) / a_s
    backward = float(np.sum(d * dt_warped.dist ** 2)) / a_d
    return EnergyBreakdown(forward, backward, a_s, a_d)


def forward_force(warped_source: EdgeMap, dt_target: DistanceField) -> GradientField:
    """``-Pi_D grad(Pi_D) S(x+u)``, without constants."""
    gx, gy = gradient_grid(dt_target)
    k = -dt_target.dist * warped_source.values
    return GradientField(k * gx, k * gy)


def backward_force(target: EdgeMap, dt_warped: DistanceField) -> GradientField:
    """``Pi_S' grad(Pi_S') D(x)``, without constants."""
    gx, gy = gradient_grid(dt_warped)
    k = dt_warped.dist * target.values
    return GradientField(k * gx, k * gy)


def chamfer_gradient_field(warped_source: EdgeMap, target: EdgeMap, dt_target: DistanceField,
                           dt_warped: DistanceField) -> GradientField:
    """Pointwise simplified chamfer gradient (forward plus backward force).

    The normalizers and the factor 2 of the squared distance are omitted.
    Border pixels carry zero force because central differences are undefined
    there.
    """
    _check_shapes(warped_source, target, dt_target, dt_warped)
    return forward_force(warped_source, dt_target) + backward_force(target, dt_warped)


def data_gradients(field: GradientField, model: MeshlessModel) -> np.ndarray:
    """``sum_x r_p(x) phi_p(x) J~(x)^T`` for all patches; shape ``(N, n_b, 2)``."""
    op = model.layout.raster
    if op.shape != (field.height, field.width):
        raise ValueError("gradient field and model domain differ in size")
    return op.project(field.jx, field.jy)


def data_gradient(field: GradientField, model: MeshlessModel, p_idx: int) -> np.ndarray:
    return data_gradients(field, model)[p_idx]
