"""Image and text I/O, atomic writes and SVG plots."""
from __future__ import annotations

import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .chamfer import GradientField
from .dtransform import DistanceField, EdgeMap


def read_image(path) -> np.ndarray:
    """8-bit grayscale raster (PGM, PNG, ...) as float64 in [0, 255]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64)


def read_edge_map(path, threshold: float = 128) -> EdgeMap:
    return EdgeMap.from_image(read_image(path), threshold)


def png_bytes(array: np.ndarray) -> bytes:
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    buf = _io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def atomic_write(path, data: bytes | str) -> None:
    """Write to a temporary file next to ``path``, then rename over it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def json_text(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def distance_csv_text(field: DistanceField) -> str:
    return "\n".join(",".join(f"{v:.6f}" for v in row) for row in field.dist) + "\n"


def colorize(values: np.ndarray) -> np.ndarray:
    """Blue (low) to red (high) RGB rendering of a scalar raster."""
    v = np.asarray(values, dtype=np.float64)
    span = v.max() - v.min()
    t = (v - v.min()) / span if span > 0 else np.zeros_like(v)
    rgb = np.stack([t, 1 - np.abs(2 * t - 1), 1 - t], axis=-1)
    return np.rint(255 * rgb).astype(np.uint8)


# --------------------------------------------------------------------- SVG

def _svg(width: int, height: int, body: list[str], scale: int = 4) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width * scale}" height="{height * scale}" '
        f'viewBox="0 0 {width} {height}">'
    )
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _pixels(edges: EdgeMap, color: str, opacity: float = 0.8) -> str:
    ys, xs = np.nonzero(edges.values > 0)
    rects = "".join(f'<rect x="{x}" y="{y}" width="1" height="1"/>' for x, y in zip(xs, ys))
    return f'<g fill="{color}" fill-opacity="{opacity}">{rects}</g>'


def overlay_svg(source: EdgeMap, target: EdgeMap, deformed: EdgeMap) -> str:
    """Source in red, target in blue, deformed source in green."""
    body = [_pixels(source, "red", 0.5), _pixels(target, "blue", 0.6), _pixels(deformed, "green", 0.7)]
    return _svg(source.width, source.height, body)


def grid_svg(ux: np.ndarray, uy: np.ndarray, spacing: int = 10) -> str:
    """Regular grid lines drawn through ``x + u(x)``."""
    h, w = ux.shape
    lines = []
    for y in range(0, h, spacing):
        pts = " ".join(f"{x + ux[y, x]:.3f},{y + uy[y, x]:.3f}" for x in range(w))
        lines.append(f'<polyline points="{pts}"/>')
    for x in range(0, w, spacing):
        pts = " ".join(f"{x + ux[y, x]:.3f},{y + uy[y, x]:.3f}" for y in range(h))
        lines.append(f'<polyline points="{pts}"/>')
    body = [f'<g fill="none" stroke="black" stroke-width="0.3">{"".join(lines)}</g>']
    return _svg(w, h, body)


def quiver_svg(field: GradientField, edges: EdgeMap | None = None, step: int = 1, length: float = 1.0) -> str:
    """Arrows for every nonzero force vector (every ``step`` pixels)."""
    body = [_pixels(edges, "gray", 0.4)] if edges is not None else []
    norm = np.hypot(field.jx, field.jy)
    top = norm.max()
    k = length * 3.0 / top if top > 0 else 0.0
    arrows = []
    for y in range(0, field.height, step):
        for x in range(0, field.width, step):
            if norm[y, x] > 0:
                arrows.append(
                    f'<line x1="{x + 0.5}" y1="{y + 0.5}" x2="{x + 0.5 + k * field.jx[y, x]:.3f}" '
                    f'y2="{y + 0.5 + k * field.jy[y, x]:.3f}"/>'
                )
    body.append(f'<g stroke="darkorange" stroke-width="0.25">{"".join(arrows)}</g>')
    return _svg(field.width, field.height, body)


def patches_svg(patches, edges: EdgeMap) -> str:
    """Patch support disks and centers over a contour image."""
    circles = "".join(
        f'<circle cx="{p.center[0] + 0.5:.3f}" cy="{p.center[1] + 0.5:.3f}" r="{p.support_radius:.3f}"/>'
        for p in patches
    )
    centers = "".join(
        f'<circle cx="{p.center[0] + 0.5:.3f}" cy="{p.center[1] + 0.5:.3f}" r="0.6"/>' for p in patches
    )
    body = [
        _pixels(edges, "red", 0.7),
        f'<g fill="none" stroke="steelblue" stroke-width="0.3">{circles}</g>',
        f'<g fill="black">{centers}</g>',
    ]
    return _svg(edges.width, edges.height, body)
