"""Seeded synthetic contour pairs with known deformations.

Shapes are drawn as 4-connected one-pixel curves so they stay unbroken under
bilinear resampling followed by a 0.5 threshold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SHAPES = ("ellipse", "star", "polyline")
MODES = ("bend", "translate", "occlude")


@dataclass(frozen=True)
class Bumps:
    """Sum of Gaussian bumps ``u(x) = sum_k A_k exp(-|x - c_k|^2 / (2 s_k^2))``."""

    centers: np.ndarray  # (k, 2)
    sigmas: np.ndarray  # (k,)
    amplitudes: np.ndarray  # (k, 2)

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        flat = pts.reshape(-1, 2)
        out = np.zeros_like(flat)
        for c, s, a in zip(self.centers, self.sigmas, self.amplitudes):
            g = np.exp(-((flat[:, 0] - c[0]) ** 2 + (flat[:, 1] - c[1]) ** 2) / (2.0 * s * s))
            out += g[:, None] * a[None, :]
        return out.reshape(pts.shape)

    def to_json(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "sigmas": self.sigmas.tolist(),
            "amplitudes": self.amplitudes.tolist(),
        }


def random_bumps(rng: np.random.Generator, size: int, peak: float) -> Bumps:
    """2 to 4 bumps scaled so the largest displacement on the pixel grid equals ``peak``."""
    k = int(rng.integers(2, 5))
    centers = rng.uniform(0.3 * size, 0.7 * size, size=(k, 2))
    sigmas = rng.uniform(0.15 * size, 0.25 * size, size=k)
    angles = rng.uniform(0, 2 * np.pi, size=k)
    mags = rng.uniform(0.5, 1.0, size=k)
    amps = np.column_stack([np.cos(angles), np.sin(angles)]) * mags[:, None]
    bumps = Bumps(centers, sigmas, amps)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    top = float(np.max(np.linalg.norm(bumps(np.stack([xs, ys], axis=-1)), axis=-1)))
    scale = peak / top if top > 0 else 0.0
    return Bumps(centers, sigmas, amps * scale)


def shape_curve(rng: np.random.Generator, shape: str, size: int = 150):
    """Dense points along a seeded curve; returns ``(points, closed)``."""
    c = size / 2.0
    t = np.linspace(0, 2 * np.pi, 4000, endpoint=False)
    if shape == "ellipse":
        a, b = rng.uniform(0.22, 0.3) * size, rng.uniform(0.15, 0.2) * size
        th = rng.uniform(0, np.pi)
        x, y = a * np.cos(t), b * np.sin(t)
        pts = np.column_stack([c + x * np.cos(th) - y * np.sin(th), c + x * np.sin(th) + y * np.cos(th)])
        return pts, True
    if shape == "star":
        r0 = rng.uniform(0.2, 0.24) * size
        depth = rng.uniform(0.15, 0.22)
        phase = rng.uniform(0, 2 * np.pi)
        r = r0 * (1 + depth * np.cos(5 * t + phase))
        return np.column_stack([c + r * np.cos(t), c + r * np.sin(t)]), True
    if shape == "polyline":
        n = 5
        xs = np.linspace(0.22 * size, 0.78 * size, n)
        ys = c + rng.uniform(-0.18, 0.18, size=n) * size
        s = np.linspace(0, n - 1, 4000)
        i = np.minimum(s.astype(int), n - 2)
        f = s - i
        pts = np.column_stack([xs[i] * (1 - f) + xs[i + 1] * f, ys[i] * (1 - f) + ys[i + 1] * f])
        return pts, False
    raise ValueError(f"unknown shape {shape!r}; expected one of {SHAPES}")


def rasterize(points, size: int, closed: bool) -> np.ndarray:
    """Draw a dense point chain as a 4-connected curve; returns a 0/255 uint8 image."""
    img = np.zeros((size, size), dtype=np.uint8)
    pix = np.rint(np.asarray(points)).astype(int)
    if closed:
        pix = np.vstack([pix, pix[:1]])
    prev = None
    for x, y in pix:
        if prev is not None:
            px, py = prev
            while (px, py) != (x, y):
                # unit steps, x first, so consecutive pixels share an edge
                if px != x:
                    px += 1 if x > px else -1
                else:
                    py += 1 if y > py else -1
                _plot(img, px, py)
        else:
            _plot(img, x, y)
        prev = (x, y)
    return img


def _plot(img, x, y):
    h, w = img.shape
    if 0 <= x < w and 0 <= y < h:
        img[y, x] = 255


def _arc_indices(arc, start, span, total, closed):
    if closed:
        return np.nonzero((arc - start) % total < span)[0]
    return np.nonzero((arc >= start) & (arc <= start + span))[0]


def _chord_depth(pts, idx):
    """Largest distance from the arc ``pts[idx]`` to the chord joining its ends."""
    a, b = pts[idx[0]], pts[idx[-1]]
    ab = b - a
    n = np.hypot(*ab)
    rel = pts[idx] - a
    if n == 0:
        return float(np.max(np.hypot(rel[:, 0], rel[:, 1])))
    return float(np.max(np.abs(ab[0] * rel[:, 1] - ab[1] * rel[:, 0])) / n)


def occlude(points, closed: bool, fraction: float, rng: np.random.Generator, min_depth: float = 2.0):
    """Replace a contiguous arc holding ``fraction`` of the curve length by its chord.

    The arc is drawn among those bulging at least ``min_depth`` pixels away
    from their chord, so the occlusion always changes the drawn contour.
    """
    pts = np.asarray(points)
    seg = np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]) if closed else pts, axis=0), axis=1)
    total = seg.sum()
    arc = np.concatenate([[0.0], np.cumsum(seg)])[: len(pts)]
    span = fraction * total
    if closed:
        starts = arc[::20]
    else:
        starts = arc[(arc >= 0.05 * total) & (arc <= 0.95 * total - span)][::20]
    deep = [s0 for s0 in starts if _chord_depth(pts, _arc_indices(arc, s0, span, total, closed)) >= min_depth]
    pool = deep or list(starts)
    start = pool[int(rng.integers(len(pool)))]
    if closed:
        rel = (arc - start) % total
        order = np.argsort(rel, kind="stable")
        pts, rel = pts[order], rel[order]
        kept = pts[rel >= span]
        a, b = kept[-1], kept[0]
        chord = np.linspace(a, b, 400, endpoint=False)[1:]
        return np.vstack([kept, chord]), True
    idx = _arc_indices(arc, start, span, total, closed)
    a, b = pts[idx[0]], pts[idx[-1]]
    chord = np.linspace(a, b, 400)
    return np.vstack([pts[: idx[0]], chord, pts[idx[-1] + 1:]]), False


@dataclass(frozen=True)
class SynthPair:
    source: np.ndarray  # uint8 0/255
    target: np.ndarray
    ux: np.ndarray  # ground truth backward displacement on the target grid
    uy: np.ndarray
    meta: dict


def make_pair(shape: str = "ellipse", seed: int = 0, peak: float = 10.0, mode: str = "bend",
              size: int = 150, shift: tuple[float, float] = (3.0, 0.0), occlusion: float = 0.15) -> SynthPair:
    """Build ``(source, target)`` where ``source(x + u(x)) = target(x)`` for the stored ``u``.

    ``bend`` moves target points by a bump field of maximum magnitude ``peak``;
    ``translate`` shifts them by ``shift``; ``occlude`` replaces a fraction of
    the target curve by a straight chord (the edge of an occluder).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    rng = np.random.default_rng(seed)
    pts, closed = shape_curve(rng, shape, size)
    target = rasterize(pts, size, closed)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    meta = {"shape": shape, "seed": seed, "mode": mode, "size": size}
    if mode == "bend":
        bumps = random_bumps(rng, size, peak)
        src_pts = pts + bumps(pts)
        u = bumps(np.stack([xs, ys], axis=-1))
        meta.update(peak=peak, bumps=bumps.to_json())
        ux, uy = u[..., 0], u[..., 1]
    elif mode == "translate":
        src_pts = pts + np.asarray(shift, dtype=np.float64)
        ux, uy = np.full_like(xs, shift[0]), np.full_like(xs, shift[1])
        meta.update(shift=list(shift))
    else:
        src_pts, closed_src = occlude(pts, closed, occlusion, rng)
        ux, uy = np.zeros_like(xs), np.zeros_like(xs)
        meta.update(occlusion=occlusion)
        return SynthPair(rasterize(src_pts, size, closed_src), target, ux, uy, meta)
    return SynthPair(rasterize(src_pts, size, closed), target, ux, uy, meta)


def field_csv_text(ux: np.ndarray, uy: np.ndarray) -> str:
    h, w = ux.shape
    lines = ["x,y,ux,uy"]
    for y in range(h):
        for x in range(w):
            lines.append(f"{x},{y},{ux[y, x]:.12f},{uy[y, x]:.12f}")
    return "\n".join(lines) + "\n"
