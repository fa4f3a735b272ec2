"""Multi-scale registration driver.

Each pyramid level runs quasi-Newton descent on ``E^d + lambda * E^c`` over
the stacked patch coefficients. Every energy evaluation blends the field,
warps the source contour image, re-binarizes it and recomputes its distance
transform; the target edge map and its distance transform stay fixed per
level.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import kernels
from .chamfer import (
    EnergyBreakdown,
    GradientField,
    backward_force,
    chamfer_gradient_field,
    data_energy,
    forward_force,
)
from .dtransform import EdgeMap, EmptyContourError, compute_distance_transform
from .metrics import DistanceStats, mutual_distance_stats
from .placement import PlacementConfig, adaptive_patches, regular_patches
from .pu_model import (
    MeshlessModel,
    MonomialBasis,
    Patch,
    PatchLayout,
    consistency_energy,
    consistency_gradients,
)

log = logging.getLogger(__name__)

MIN_LEVEL_SIZE = 16


class RegistrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RegistrationConfig:
    lam: float = 0.001
    basis_order: int = 1
    basis_family: str = "tensor"
    placement: str = "regular"
    patches: PlacementConfig | None = None
    pyramid_levels: int = 3
    max_iters: int = 200
    grad_tol: float = 1e-4
    energy_rel_tol: float = 1e-6
    edge_threshold: float = 128.0
    warp_threshold: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 10
    initial_step: float = 1.0
    lbfgs_history: int = 10
    dense_bfgs_limit: int = 5000

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.placement not in ("regular", "adaptive"):
            raise ValueError("placement must be 'regular' or 'adaptive'")
        if self.basis_order < 0:
            raise ValueError("basis_order must be >= 0")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")

    @property
    def placement_config(self) -> PlacementConfig:
        if self.patches is not None:
            return self.patches
        if self.placement == "adaptive":
            return PlacementConfig.adaptive_default()
        return PlacementConfig.regular_default()

    @property
    def basis(self) -> MonomialBasis:
        return MonomialBasis(self.basis_order, self.basis_family)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["lambda"] = doc.pop("lam")
        doc["patches"] = asdict(self.placement_config)
        return doc

    @classmethod
    def from_mapping(cls, doc: dict) -> "RegistrationConfig":
        doc = dict(doc)
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if isinstance(doc.get("patches"), dict):
            doc["patches"] = PlacementConfig(**doc["patches"])
        return cls(**doc)


@dataclass(frozen=True)
class DeformationField:
    """Dense displacement (pixels) with the mask of pixels covered by patches."""

    ux: np.ndarray
    uy: np.ndarray
    covered: np.ndarray

    @property
    def height(self) -> int:
        return self.ux.shape[0]

    @property
    def width(self) -> int:
        return self.ux.shape[1]

    @classmethod
    def zeros(cls, height: int, width: int) -> "DeformationField":
        z = np.zeros((height, width))
        return cls(z, z.copy(), np.ones((height, width), dtype=bool))

    @classmethod
    def from_model(cls, model: MeshlessModel) -> "DeformationField":
        op = model.layout.raster
        ux, uy = op.blend(model.coeffs)
        cov = op.coverage
        return cls(np.where(cov, ux, 0.0), np.where(cov, uy, 0.0), cov.copy())

    def max_norm(self) -> float:
        return float(np.max(np.hypot(self.ux, self.uy)))

    def csv_text(self) -> str:
        h, w = self.ux.shape
        lines = ["x,y,ux,uy,covered"]
        for y in range(h):
            for x in range(w):
                lines.append(f"{x},{y},{self.ux[y, x]:.6f},{self.uy[y, x]:.6f},{int(self.covered[y, x])}")
        return "\n".join(lines) + "\n"


@dataclass
class LevelReport:
    level: int
    width: int
    height: int
    n_patches: int
    n_params: int
    pixel_work: int
    iterations: int = 0
    gradient_evals: int = 0
    energy_evals: int = 0
    stop_reason: str = ""
    trace: list = field(default_factory=list)


@dataclass
class RegistrationReport:
    levels: list
    initial: DistanceStats | None = None
    final: DistanceStats | None = None
    final_energy: dict | None = None
    backend: str = kernels.BACKEND
    wall_time: float = 0.0

    @property
    def iterations(self) -> list[int]:
        return [lv.iterations for lv in self.levels]

    def to_json(self) -> dict:
        """Serializable summary; wall time is left out so output is reproducible."""
        return {
            "levels": [asdict(lv) for lv in self.levels],
            "initial": self.initial.to_json() if self.initial else None,
            "final": self.final.to_json() if self.final else None,
            "final_energy": self.final_energy,
        }


# ------------------------------------------------------------- raster ops

def warp_image(image, field: DeformationField) -> np.ndarray:
    """Backward mapping: ``out(x) = image(x + u(x))``, bilinear, zero outside."""
    img = np.ascontiguousarray(image, dtype=np.float64)
    if img.shape != field.ux.shape:
        raise ValueError("image and field differ in size")
    h, w = img.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return kernels.bilinear_sample(
        img, np.ascontiguousarray(xs + field.ux), np.ascontiguousarray(ys + field.uy)
    )


def detect_edges(image, threshold: float = 128.0) -> EdgeMap:
    """Binary contour map: 1 wherever ``image >= threshold``."""
    return EdgeMap.from_image(image, threshold)


def build_pyramid(image, levels: int) -> list[np.ndarray]:
    """Factor-2 box-filtered chain, finest first.

    Odd dimensions are zero-padded by one pixel before averaging, so coarse
    pixel ``i`` always covers fine pixels ``2i`` and ``2i + 1``.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    img = np.asarray(image, dtype=np.float64)
    out = [img]
    for _ in range(levels - 1):
        cur = out[-1]
        h, w = cur.shape
        if (h + 1) // 2 < MIN_LEVEL_SIZE or (w + 1) // 2 < MIN_LEVEL_SIZE:
            raise ValueError(
                f"too many pyramid levels: coarsest level would be smaller than "
                f"{MIN_LEVEL_SIZE}x{MIN_LEVEL_SIZE}"
            )
        padded = np.zeros((h + h % 2, w + w % 2))
        padded[:h, :w] = cur
        out.append(0.25 * (padded[0::2, 0::2] + padded[1::2, 0::2]
                           + padded[0::2, 1::2] + padded[1::2, 1::2]))
    return out


def level_patches(patches, level: int) -> list[Patch]:
    """Finest-level patches expressed in the coordinates of pyramid ``level``."""
    k = 2 ** level
    off = (k - 1) / 2.0
    return [Patch(((p.center[0] - off) / k, (p.center[1] - off) / k), p.radius / k, p.influence)
            for p in patches]


def refine_coeffs(coeffs: np.ndarray, basis: MonomialBasis) -> np.ndarray:
    """Carry coefficients one level finer: displacements double, coordinates double."""
    scale = 2.0 / 2.0 ** basis.degrees
    return coeffs * scale[None, :, None]


# ----------------------------------------------------------- level problem

@dataclass
class _State:
    x: np.ndarray
    energy: EnergyBreakdown
    consistency: float
    total: float
    warped: EdgeMap
    dt_warped: object


class _LevelProblem:
    """Energy and approximate gradient for one pyramid level."""

    def __init__(self, source: np.ndarray, target: EdgeMap, layout: PatchLayout, cfg: RegistrationConfig):
        self.source = np.ascontiguousarray(source, dtype=np.float64)
        self.target = target
        self.dt_target = compute_distance_transform(target)
        self.layout = layout
        self.cfg = cfg
        self.op = layout.raster
        self.shape = (len(layout), layout.basis.size, 2)
        h, w = source.shape
        self._ys, self._xs = np.mgrid[0:h, 0:w].astype(np.float64)
        self.energy_evals = 0
        self.gradient_evals = 0
        self.where = ""  # "level L, iteration k", for error messages

    def model(self, x) -> MeshlessModel:
        return MeshlessModel(self.layout, x.reshape(self.shape))

    def warp(self, x) -> EdgeMap:
        ux, uy = self.op.blend(x)
        cov = self.op.coverage
        ux = np.where(cov, ux, 0.0)
        uy = np.where(cov, uy, 0.0)
        warped = kernels.bilinear_sample(
            self.source, np.ascontiguousarray(self._xs + ux), np.ascontiguousarray(self._ys + uy)
        )
        return EdgeMap.from_image(warped, self.cfg.warp_threshold)

    def evaluate(self, x) -> _State | None:
        """Energy at ``x``; ``None`` when the warped contour vanished."""
        self.energy_evals += 1
        warped = self.warp(x)
        if warped.is_empty():
            return None
        dt_w = compute_distance_transform(warped)
        e = data_energy(warped, self.target, self.dt_target, dt_w)
        ec = consistency_energy(self.model(x)) if self.cfg.lam > 0 else 0.0
        total = e.total + self.cfg.lam * ec
        if not math.isfinite(total):
            raise RegistrationError(
                f"non-finite energy at {self.where}: data={e.total!r} consistency={ec!r}"
            )
        return _State(x, e, ec, total, warped, dt_w)

    def force_field(self, st: _State) -> GradientField:
        return chamfer_gradient_field(st.warped, self.target, self.dt_target, st.dt_warped)

    def gradient(self, st: _State) -> np.ndarray:
        # Forward and backward forces carry their own 2/A factor so the
        # gradient has the scale of the normalized energy it descends.
        self.gradient_evals += 1
        fwd = forward_force(st.warped, self.dt_target).scaled(2.0 / st.energy.a_s)
        bwd = backward_force(self.target, st.dt_warped).scaled(2.0 / st.energy.a_d)
        f = fwd + bwd
        g = self.op.project(f.jx, f.jy)
        if self.cfg.lam > 0:
            g = g + self.cfg.lam * consistency_gradients(self.model(st.x))
        return g.ravel()


# ----------------------------------------------------------- quasi-Newton

class _InverseHessian:
    """BFGS inverse-Hessian approximation, dense or limited-memory.

    Both variants start from ``gamma * P`` with ``P`` a fixed diagonal
    preconditioner that puts coefficients of every degree on a displacement
    scale.
    """

    def __init__(self, precond: np.ndarray, gamma: float, dense: bool, history: int):
        self.P = precond
        self.gamma = gamma
        self.dense = dense
        self.history = history
        self.reset(gamma)

    def reset(self, gamma: float | None = None):
        if gamma is not None:
            self.gamma = gamma
        self.pairs = []
        self.H = np.diag(self.gamma * self.P) if self.dense else None

    @property
    def fresh(self) -> bool:
        return not self.pairs

    def apply(self, g: np.ndarray) -> np.ndarray:
        if self.dense:
            return self.H @ g
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(self.pairs):
            a = rho * np.dot(s, q)
            alphas.append(a)
            q -= a * y
        r = self.gamma * self.P * q
        for (s, y, rho), a in zip(self.pairs, reversed(alphas)):
            b = rho * np.dot(y, r)
            r += (a - b) * s
        return r

    def update(self, s: np.ndarray, y: np.ndarray) -> bool:
        sy = float(np.dot(s, y))
        if not sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            return False
        rho = 1.0 / sy
        if self.fresh:
            self.gamma = sy / float(np.dot(y, self.P * y))
            if self.dense:
                self.H = np.diag(self.gamma * self.P)
        if self.dense:
            Hy = self.H @ y
            yHy = float(np.dot(y, Hy))
            self.H += (rho * rho * yHy + rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
        self.pairs.append((s, y, rho))
        if len(self.pairs) > self.history:
            self.pairs.pop(0)
        return True


def _precond(layout: PatchLayout) -> np.ndarray:
    deg = layout.basis.degrees
    P = layout.radii[:, None] ** (-2.0 * deg[None, :])
    return np.repeat(P[:, :, None], 2, axis=2).ravel()


def _descend(problem: _LevelProblem, x0: np.ndarray, report: LevelReport) -> np.ndarray:
    cfg = problem.cfg
    problem.where = f"level {report.level}, iteration 0"
    st = problem.evaluate(x0)
    if st is None:
        raise RegistrationError("degenerate warp: empty contour")
    report.trace.append(_trace_row(0, st))
    if cfg.max_iters == 0:
        report.stop_reason = "max_iters"
        report.energy_evals = problem.energy_evals
        return st.x
    g = problem.gradient(st)
    P = _precond(problem.layout)
    scale = np.sqrt(P)  # maps coefficient steps to displacement units
    steep = P * g
    span = float(np.max(np.abs(steep / scale))) if g.size else 0.0
    gamma0 = cfg.initial_step / span if span > 0 else 1.0
    H = _InverseHessian(P, gamma0, dense=g.size <= cfg.dense_bfgs_limit, history=cfg.lbfgs_history)

    report.stop_reason = "max_iters"
    for it in range(1, cfg.max_iters + 1):
        problem.where = f"level {report.level}, iteration {it}"
        if not np.all(np.isfinite(g)):
            raise RegistrationError(f"non-finite gradient at level {report.level}, iteration {it}")
        if float(np.max(np.abs(g))) <= cfg.grad_tol:
            report.stop_reason = "gradient"
            break
        new, slope = _line_search(problem, st, g, H)
        if new is None and not H.fresh:
            H.reset(gamma0)
            new, slope = _line_search(problem, st, g, H)
        if new is None:
            report.stop_reason = "line_search"
            break
        g_new = problem.gradient(new)
        H.update(new.x - st.x, g_new - g)
        drop = st.total - new.total
        st, g = new, g_new
        report.iterations = it
        report.trace.append(_trace_row(it, st))
        if drop <= cfg.energy_rel_tol * max(abs(st.total + drop), 1e-300):
            report.stop_reason = "energy"
            break
    report.energy_evals = problem.energy_evals
    report.gradient_evals = problem.gradient_evals
    return st.x


def _line_search(problem: _LevelProblem, st: _State, g: np.ndarray, H: _InverseHessian):
    cfg = problem.cfg
    p = -H.apply(g)
    slope = float(np.dot(g, p))
    if not slope < 0:
        H.reset()
        p = -H.apply(g)
        slope = float(np.dot(g, p))
    step = 1.0
    for _ in range(cfg.max_backtracks + 1):
        trial = problem.evaluate(st.x + step * p)
        if trial is not None and trial.total <= st.total + cfg.armijo * step * slope and trial.total < st.total:
            return trial, slope
        step *= 0.5
    return None, slope


def _trace_row(it: int, st: _State) -> dict:
    return {
        "iter": it,
        "data": st.energy.total,
        "forward": st.energy.forward,
        "backward": st.energy.backward,
        "consistency": st.consistency,
        "total": st.total,
    }


# --------------------------------------------------------------- register

def _binary_image(image: np.ndarray, threshold: float) -> np.ndarray:
    return (image >= threshold).astype(np.float64)


def register(source_image, target_image, config: RegistrationConfig | None = None):
    """Register the source contour image onto the target contour image.

    Returns ``(model, field, report)``: the finest-level meshless model, the
    dense deformation (backward mapping, so the registered source is
    ``source(x + u(x))``), and a :class:`RegistrationReport`.
    """
    cfg = config or RegistrationConfig()
    t_start = time.perf_counter()
    src = np.asarray(source_image, dtype=np.float64)
    tgt = np.asarray(target_image, dtype=np.float64)
    if src.shape != tgt.shape or src.ndim != 2:
        raise ValueError("source and target must be 2-D images of equal size")
    h, w = src.shape
    src_pyr = build_pyramid(src, cfg.pyramid_levels)
    tgt_pyr = build_pyramid(tgt, cfg.pyramid_levels)

    # a level-L pixel averages 4^L fine pixels; any fine contour pixel keeps it on
    def level_threshold(level):
        return cfg.edge_threshold / 4.0 ** level

    src_edges0 = EdgeMap(_binary_image(src, cfg.edge_threshold))
    tgt_edges0 = EdgeMap(_binary_image(tgt, cfg.edge_threshold))
    if src_edges0.is_empty() or tgt_edges0.is_empty():
        raise EmptyContourError("no contour pixels")
    basis = cfg.basis
    pc = cfg.placement_config
    if cfg.placement == "regular":
        patches0 = regular_patches(w, h, pc)
    else:
        patches0 = adaptive_patches(src_edges0, compute_distance_transform(tgt_edges0), pc)

    levels = []
    coeffs = None
    model = None
    for level in reversed(range(cfg.pyramid_levels)):
        s_img = _binary_image(src_pyr[level], level_threshold(level))
        t_edges = EdgeMap(_binary_image(tgt_pyr[level], level_threshold(level)))
        if not s_img.any() or t_edges.is_empty():
            raise EmptyContourError(f"no contour pixels at pyramid level {level}")
        lh, lw = s_img.shape
        layout = PatchLayout(basis, level_patches(patches0, level), lw, lh)
        if coeffs is None:
            coeffs = np.zeros((len(layout), basis.size, 2))
        problem = _LevelProblem(s_img, t_edges, layout, cfg)
        lr = LevelReport(level, lw, lh, len(layout), coeffs.size, layout.raster.pair_count)
        log.info("level %d: %dx%d, %d patches", level, lw, lh, len(layout))
        x = _descend(problem, coeffs.ravel().copy(), lr)
        levels.append(lr)
        model = MeshlessModel(layout, x.reshape(coeffs.shape))
        coeffs = refine_coeffs(model.coeffs, basis) if level > 0 else model.coeffs

    field_ = DeformationField.from_model(model)
    warped = detect_edges(warp_image(_binary_image(src, cfg.edge_threshold), field_), cfg.warp_threshold)
    if warped.is_empty():
        raise RegistrationError("degenerate warp: empty contour")
    dt_t = compute_distance_transform(tgt_edges0)
    e = data_energy(warped, tgt_edges0, dt_t, compute_distance_transform(warped))
    report = RegistrationReport(
        levels=levels,
        initial=mutual_distance_stats(src_edges0, tgt_edges0),
        final=mutual_distance_stats(warped, tgt_edges0),
        final_energy={"data": e.total, "forward": e.forward, "backward": e.backward,
                      "consistency": consistency_energy(model)},
    )
    report.wall_time = time.perf_counter() - t_start
    return model, field_, report


def registered_edges(source_image, field: DeformationField, config: RegistrationConfig | None = None) -> EdgeMap:
    """Source contour after warping with ``field`` and re-binarizing."""
    cfg = config or RegistrationConfig()
    src = _binary_image(np.asarray(source_image, dtype=np.float64), cfg.edge_threshold)
    return detect_edges(warp_image(src, field), cfg.warp_threshold)


__all__ = [
    "DeformationField",
    "RegistrationConfig",
    "RegistrationError",
    "RegistrationReport",
    "build_pyramid",
    "detect_edges",
    "register",
    "registered_edges",
    "warp_image",
]
