"""Partition-of-unity meshless deformation model.

A deformation is a set of circular patches, each carrying a local polynomial
displacement model ``u_p(x) = d_p^T phi(x - p)``. Local models are blended
with normalized B-spline weights, and a consistency regularizer compares the
coefficients of overlapping patches after re-expressing them in a common
coordinate frame with the basis-shifting operator.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np
from scipy import sparse

SUPPORT = 1.5  # weight vanishes beyond 1.5 normalized radii


# ---------------------------------------------------------------- weights

def weight(rnorm):
    """Quadratic B-spline of the normalized distance; accepts scalars or arrays."""
    r = np.asarray(rnorm, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("normalized distance must be nonnegative")
    out = np.where(r < 0.5, 0.75 - r * r, 0.5 * (1.5 - r) ** 2)
    out = np.where(r > SUPPORT, 0.0, out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Patch:
    center: tuple[float, float]
    radius: float
    influence: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("patch radius must be positive")
        if not 0 < self.influence <= 1:
            raise ValueError("patch influence must lie in (0, 1]")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "influence", float(self.influence))

    @property
    def support_radius(self) -> float:
        return SUPPORT * self.radius


def patch_weight(patch: Patch, x):
    """``influence * weight(|x - center| / radius)`` at one point or an (n, 2) array."""
    x = np.asarray(x, dtype=np.float64)
    dist = np.hypot(x[..., 0] - patch.center[0], x[..., 1] - patch.center[1])
    return patch.influence * weight(dist / patch.radius)


# ------------------------------------------------------------------ basis

def pascal_exponents(order: int, family: str = "tensor") -> list[tuple[int, int]]:
    """Monomial exponents ``(s, t)`` for ``x^s y^t`` in Pascal-triangle order.

    Sorted by total degree, then by imbalance ``|s - t|``, then larger ``s``
    first, so degree two reads ``xy, x^2, y^2``.

    ``family="tensor"`` takes every ``s, t <= order`` ((order+1)^2 terms);
    ``family="total"`` takes ``s + t <= order`` (the triangle itself).
    """
    if order < 0:
        raise ValueError("basis order must be nonnegative")
    if family == "tensor":
        exps = [(s, t) for s in range(order + 1) for t in range(order + 1)]
    elif family == "total":
        exps = [(s, t) for s in range(order + 1) for t in range(order + 1 - s)]
    else:
        raise ValueError(f"unknown basis family {family!r}")
    return sorted(exps, key=lambda e: (e[0] + e[1], abs(e[0] - e[1]), -e[0]))


@dataclass(frozen=True)
class MonomialBasis:
    order: int = 1
    family: str = "tensor"

    @cached_property
    def exponents(self) -> tuple[tuple[int, int], ...]:
        return tuple(pascal_exponents(self.order, self.family))

    @property
    def size(self) -> int:
        return len(self.exponents)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([s + t for s, t in self.exponents])

    def eval(self, x) -> np.ndarray:
        """Monomials at ``x``; shape ``(..., size)`` for input of shape ``(..., 2)``."""
        x = np.asarray(x, dtype=np.float64)
        xs, ys = x[..., 0], x[..., 1]
        m = self.order
        px = [np.ones_like(xs)]
        py = [np.ones_like(ys)]
        for _ in range(m):
            px.append(px[-1] * xs)
            py.append(py[-1] * ys)
        return np.stack([px[s] * py[t] for s, t in self.exponents], axis=-1)

    def derivative_matrix(self, eta: tuple[int, int]) -> np.ndarray:
        """Matrix ``D`` with ``(D d)^T phi = d^T (d^eta phi)``, acting on coefficients."""
        index = {e: i for i, e in enumerate(self.exponents)}
        ex, ey = eta
        D = np.zeros((self.size, self.size))
        for j, (s, t) in enumerate(self.exponents):
            if s >= ex and t >= ey:
                c = np.prod(range(s - ex + 1, s + 1)) * np.prod(range(t - ey + 1, t + 1))
                D[index[(s - ex, t - ey)], j] = c
        return D


def basis_eval(basis: MonomialBasis, x) -> np.ndarray:
    return basis.eval(x)


def shift_matrices(basis: MonomialBasis, deltas) -> np.ndarray:
    """Shift operators for a stack of offsets; shape ``(k, n_b, n_b)``.

    ``S[i, j]`` is the coefficient of monomial ``i`` in the expansion of
    monomial ``j`` evaluated at ``x + delta``, so
    ``phi(x + delta) = S^T phi(x)``.
    """
    deltas = np.asarray(deltas, dtype=np.float64).reshape(-1, 2)
    exps = basis.exponents
    n = len(exps)
    m = basis.order
    dx = [np.ones(len(deltas))]
    dy = [np.ones(len(deltas))]
    for _ in range(m):
        dx.append(dx[-1] * deltas[:, 0])
        dy.append(dy[-1] * deltas[:, 1])
    S = np.zeros((len(deltas), n, n))
    for j, (s, t) in enumerate(exps):
        for i, (a, b) in enumerate(exps):
            if a <= s and b <= t:
                S[:, i, j] = comb(s, a) * comb(t, b) * dx[s - a] * dy[t - b]
    return S


@dataclass(frozen=True)
class ShiftOperator:
    matrix: np.ndarray

    def __matmul__(self, other):
        if isinstance(other, ShiftOperator):
            return ShiftOperator(self.matrix @ other.matrix)
        return self.matrix @ other


def shift_operator(basis: MonomialBasis, delta) -> ShiftOperator:
    return ShiftOperator(shift_matrices(basis, delta)[0])


# ------------------------------------------------------------------ model

class OutsideCoverageError(ValueError):
    pass


class PatchLayout:
    """Patch geometry shared by every coefficient state of a model.

    Caches the consistency pair table and the sparse blending operator over a
    raster domain, both of which depend only on geometry.
    """

    def __init__(self, basis: MonomialBasis, patches, width: int, height: int):
        self.basis = basis
        self.patches = tuple(patches)
        if not self.patches:
            raise ValueError("a layout needs at least one patch")
        self.width = int(width)
        self.height = int(height)
        self.centers = np.array([p.center for p in self.patches], dtype=np.float64)
        self.radii = np.array([p.radius for p in self.patches], dtype=np.float64)
        self.alphas = np.array([p.influence for p in self.patches], dtype=np.float64)

    def __len__(self):
        return len(self.patches)

    def weights_at(self, x) -> np.ndarray:
        """Unnormalized weight of every patch at points ``x``; shape ``(n_pts, N)``."""
        x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
        d = np.hypot(x[:, None, 0] - self.centers[None, :, 0], x[:, None, 1] - self.centers[None, :, 1])
        return self.alphas * weight(d / self.radii)

    @cached_property
    def pairs(self):
        """Ordered pairs ``(p, q)``, ``p != q``, with ``w_q(|p - q|) > 0``.

        Returns ``(p_idx, q_idx, w, S)`` where ``S[k] = S(center_p - center_q)``.
        Pairs are listed by ``p`` then ``q`` so reductions run in a fixed order.
        """
        c = self.centers
        d = np.hypot(c[:, None, 0] - c[None, :, 0], c[:, None, 1] - c[None, :, 1])
        w = self.alphas[None, :] * weight(d / self.radii[None, :])
        np.fill_diagonal(w, 0.0)
        p_idx, q_idx = np.nonzero(w > 0)
        S = shift_matrices(self.basis, c[p_idx] - c[q_idx])
        return p_idx, q_idx, w[p_idx, q_idx], S

    @cached_property
    def raster(self) -> "RasterOperator":
        return RasterOperator(self)


class RasterOperator:
    """Sparse map from stacked coefficients to per-pixel displacement.

    Row ``k`` is pixel ``(x, y) = (k % width, k // width)``; column
    ``p * n_b + i`` holds ``r_p(x) * phi_i(x - p)``. Blending is ``M @ c`` and
    the projection of a per-pixel vector field onto coefficients is ``M.T @ f``.
    """

    def __init__(self, layout: PatchLayout):
        h, w = layout.height, layout.width
        basis = layout.basis
        nb = basis.size
        pix_chunks, patch_chunks, w_chunks = [], [], []
        for p, (c, r, a) in enumerate(zip(layout.centers, layout.radii, layout.alphas)):
            reach = SUPPORT * r
            x0, x1 = max(0, int(np.ceil(c[0] - reach))), min(w - 1, int(np.floor(c[0] + reach)))
            y0, y1 = max(0, int(np.ceil(c[1] - reach))), min(h - 1, int(np.floor(c[1] + reach)))
            if x0 > x1 or y0 > y1:
                continue
            ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
            wt = a * weight(np.hypot(xs - c[0], ys - c[1]) / r)
            keep = wt > 0
            pix_chunks.append((ys[keep] * w + xs[keep]).astype(np.int64))
            patch_chunks.append(np.full(int(keep.sum()), p, dtype=np.int64))
            w_chunks.append(wt[keep])
        pix = np.concatenate(pix_chunks) if pix_chunks else np.zeros(0, np.int64)
        pid = np.concatenate(patch_chunks) if patch_chunks else np.zeros(0, np.int64)
        wts = np.concatenate(w_chunks) if w_chunks else np.zeros(0)

        total = np.bincount(pix, weights=wts, minlength=h * w)
        self.coverage = (total > 0).reshape(h, w)
        self.weight_sum = total.reshape(h, w)
        self.pair_count = int(len(pix))
        ratio = wts / total[pix]
        offsets = np.column_stack([pix % w, pix // w]).astype(np.float64) - layout.centers[pid]
        phi = basis.eval(offsets)  # (n_pairs, nb)
        rows = np.repeat(pix, nb)
        cols = (pid[:, None] * nb + np.arange(nb)[None, :]).ravel()
        vals = (ratio[:, None] * phi).ravel()
        self.matrix = sparse.csr_matrix(
            (vals, (rows, cols)), shape=(h * w, len(layout) * nb)
        )
        self.matrix_t = self.matrix.T.tocsr()
        self.shape = (h, w)
        self.nb = nb

    def blend(self, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = coeffs.reshape(-1, 2)
        h, w = self.shape
        ux = (self.matrix @ c[:, 0]).reshape(h, w)
        uy = (self.matrix @ c[:, 1]).reshape(h, w)
        return ux, uy

    def project(self, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
        """``sum_x r_p(x) phi_p(x) f(x)^T`` for every patch; shape ``(N, n_b, 2)``."""
        gx = self.matrix_t @ fx.ravel()
        gy = self.matrix_t @ fy.ravel()
        return np.stack([gx, gy], axis=-1).reshape(-1, self.nb, 2)


@dataclass(frozen=True)
class MeshlessModel:
    """Patches plus one ``n_b x 2`` coefficient matrix per patch.

    Column 0 of ``coeffs[p]`` holds the ``u`` (x-displacement) coefficients,
    column 1 the ``v`` coefficients.
    """

    layout: PatchLayout
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.float64).reshape(len(self.layout), self.layout.basis.size, 2)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, basis: MonomialBasis, patches, width: int, height: int) -> "MeshlessModel":
        layout = PatchLayout(basis, patches, width, height)
        return cls(layout, np.zeros((len(layout), basis.size, 2)))

    @property
    def basis(self) -> MonomialBasis:
        return self.layout.basis

    @property
    def patches(self) -> tuple[Patch, ...]:
        return self.layout.patches

    @property
    def width(self) -> int:
        return self.layout.width

    @property
    def height(self) -> int:
        return self.layout.height

    def with_coeffs(self, coeffs) -> "MeshlessModel":
        return MeshlessModel(self.layout, coeffs)

    def local_displacement(self, p_idx: int, x) -> np.ndarray:
        """``d_p^T phi(x - p)`` for one patch."""
        phi = self.basis.eval(np.asarray(x, dtype=np.float64) - self.layout.centers[p_idx])
        return phi @ self.coeffs[p_idx]

    def partition_weights(self, x) -> np.ndarray:
        """``r_p(x)`` for all patches at points ``x``; rows sum to 1 where covered."""
        w = self.layout.weights_at(x)
        total = w.sum(axis=1, keepdims=True)
        if np.any(total <= 0):
            raise OutsideCoverageError("outside patch coverage")
        return w / total

    def to_json(self) -> dict:
        return {
            "basis_order": self.basis.order,
            "basis_family": self.basis.family,
            "width": self.width,
            "height": self.height,
            "patches": [
                {"cx": p.center[0], "cy": p.center[1], "r": p.radius, "alpha": p.influence}
                for p in self.patches
            ],
            "coeffs": [c.tolist() for c in self.coeffs],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    @classmethod
    def from_json(cls, doc: dict) -> "MeshlessModel":
        basis = MonomialBasis(int(doc["basis_order"]), doc.get("basis_family", "tensor"))
        patches = [Patch((p["cx"], p["cy"]), p["r"], p.get("alpha", 1.0)) for p in doc["patches"]]
        layout = PatchLayout(basis, patches, doc.get("width", 0), doc.get("height", 0))
        return cls(layout, np.asarray(doc["coeffs"], dtype=np.float64))


def blend(model: MeshlessModel, x) -> np.ndarray:
    """Blended displacement ``u(x) = sum_p r_p(x) u_p(x)`` at one point or ``(n, 2)`` points."""
    x = np.asarray(x, dtype=np.float64)
    pts = x.reshape(-1, 2)
    r = model.partition_weights(pts)  # (n, N)
    phi = model.basis.eval(pts[:, None, :] - model.layout.centers[None, :, :])  # (n, N, nb)
    local = np.einsum("nqb,qbc->nqc", phi, model.coeffs)
    u = np.einsum("nq,nqc->nc", r, local)
    return u.reshape(x.shape)


# ------------------------------------------------------------ consistency

def consistency_pair(model: MeshlessModel, p_idx: int, q_idx: int) -> float:
    """``|| d_p - S(p - q) d_q ||_F^2``."""
    c = model.layout.centers
    S = shift_matrices(model.basis, c[p_idx] - c[q_idx])[0]
    diff = model.coeffs[p_idx] - S @ model.coeffs[q_idx]
    return float(np.sum(diff * diff))


def _pair_residuals(model: MeshlessModel):
    p_idx, q_idx, w, S = model.layout.pairs
    res = model.coeffs[p_idx] - np.einsum("kij,kjc->kic", S, model.coeffs[q_idx])
    return p_idx, q_idx, w, S, res


def consistency_energy(model: MeshlessModel) -> float:
    """Pair-weighted consistency, averaged over patches."""
    p_idx, q_idx, w, S, res = _pair_residuals(model)
    if len(w) == 0:
        return 0.0
    per_pair = np.einsum("kic,kic->k", res, res)
    return float(np.dot(w, per_pair) / len(model.layout))


def consistency_gradients(model: MeshlessModel) -> np.ndarray:
    """Exact derivative of :func:`consistency_energy` for every patch; ``(N, n_b, 2)``.

    Each pair term contributes to both members: ``2 w (d_p - S d_q)`` to
    patch ``p`` and ``-2 w S^T (d_p - S d_q)`` to patch ``q``.
    """
    N = len(model.layout)
    grad = np.zeros_like(model.coeffs)
    p_idx, q_idx, w, S, res = _pair_residuals(model)
    if len(w) == 0:
        return grad
    wres = (2.0 / N) * w[:, None, None] * res
    np.add.at(grad, p_idx, wres)
    np.add.at(grad, q_idx, -np.einsum("kji,kjc->kic", S, wres))
    return grad


def consistency_gradient(model: MeshlessModel, p_idx: int) -> np.ndarray:
    return consistency_gradients(model)[p_idx]
