"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``.

Same algorithms, same floating-point operation order, so results match the
compiled backend bit for bit.
"""
import numpy as np

INF = 1e20


def _envelope_1d(f):
    n = len(f)
    v = [0] * n
    z = [0.0] * (n + 1)
    k = 0
    z[0] = -INF
    z[1] = INF
    for q in range(1, n):
        fq = f[q]
        s = ((fq + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((fq + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INF
    d = [0.0] * n
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]]
    return d


def edt_squared(mask):
    mask = np.asarray(mask)
    h, w = mask.shape
    out = np.where(mask != 0, 0.0, INF)
    for j in range(w):
        out[:, j] = _envelope_1d(out[:, j].tolist())
    for i in range(h):
        out[i, :] = _envelope_1d(out[i, :].tolist())
    return out


def bilinear_sample(img, xs, ys):
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    fx = xs - x0
    fy = ys - y0

    def tap(yy, xx):
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        vals = np.zeros(xs.shape)
        vals[ok] = img[yy[ok], xx[ok]]
        return vals

    v00 = tap(y0, x0)
    v01 = tap(y0, x0 + 1)
    v10 = tap(y0 + 1, x0)
    v11 = tap(y0 + 1, x0 + 1)
    out = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11)
    exact = (fx == 0.0) & (fy == 0.0)
    out[exact] = v00[exact]
    return out


__all__ = ["edt_squared", "bilinear_sample"]
