"""Nonrigid 2-D contour registration.

Variational chamfer matching over a partition-of-unity meshless deformation
model, with a consistency regularizer between overlapping local polynomials.
"""
from ._threads import THREADS  # noqa: F401  (must precede numpy)
from .chamfer import EnergyBreakdown, GradientField, chamfer_gradient_field, data_energy, data_gradient
from .dtransform import DistanceField, EdgeMap, EmptyContourError, compute_distance_transform, sample_gradient
from .kernels import BACKEND
from .metrics import DistanceStats, mutual_distance_stats
from .optimizer import (
    DeformationField,
    RegistrationConfig,
    RegistrationError,
    RegistrationReport,
    build_pyramid,
    detect_edges,
    register,
    warp_image,
)
from .placement import PlacementConfig, adaptive_patches, contour_arc_samples, regular_patches
from .pu_model import (
    MeshlessModel,
    MonomialBasis,
    Patch,
    blend,
    consistency_energy,
    consistency_gradient,
    shift_operator,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DeformationField",
    "DistanceField",
    "DistanceStats",
    "EdgeMap",
    "EmptyContourError",
    "EnergyBreakdown",
    "GradientField",
    "MeshlessModel",
    "MonomialBasis",
    "Patch",
    "PlacementConfig",
    "RegistrationConfig",
    "RegistrationError",
    "RegistrationReport",
    "adaptive_patches",
    "blend",
    "build_pyramid",
    "chamfer_gradient_field",
    "compute_distance_transform",
    "consistency_energy",
    "consistency_gradient",
    "contour_arc_samples",
    "data_energy",
    "data_gradient",
    "detect_edges",
    "mutual_distance_stats",
    "register",
    "regular_patches",
    "sample_gradient",
    "shift_operator",
    "warp_image",
]
