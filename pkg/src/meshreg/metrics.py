"""Mutual contour distance statistics."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dtransform import EdgeMap, EmptyContourError, compute_distance_transform


@dataclass(frozen=True)
class DistanceStats:
    mean: float
    max: float
    variance: float
    n_points: int

    def to_json(self) -> dict:
        return asdict(self)

    def csv_row(self) -> str:
        return f"{self.mean:.6f},{self.max:.6f},{self.variance:.6f},{self.n_points}"


def mutual_distance_stats(a: EdgeMap, b: EdgeMap) -> DistanceStats:
    """Pool distances of a's pixels to b and b's pixels to a.

    Mean, maximum and population variance are taken over the pooled set.
    """
    if a.shape != b.shape:
        raise ValueError("edge maps differ in size")
    if a.is_empty() or b.is_empty():
        raise EmptyContourError("no contour pixels")
    da = compute_distance_transform(a).dist
    db = compute_distance_transform(b).dist
    # sorted so the reductions do not depend on argument order
    pooled = np.sort(np.concatenate([db[a.values > 0], da[b.values > 0]]))
    return DistanceStats(
        mean=float(pooled.mean()),
        max=float(pooled.max()),
        variance=float(pooled.var()),
        n_points=int(pooled.size),
    )
