import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from meshreg.dtransform import (
    DistanceField,
    EdgeMap,
    EmptyContourError,
    compute_distance_transform,
    gradient_grid,
    sample_gradient,
)
from oracles import brute_force_dt, clean_pixels


def single(shape, x, y):
    return EdgeMap.from_points(shape, [(x, y)])


def test_single_pixel_5x5():
    f = compute_distance_transform(single((5, 5), 2, 2))
    assert f.dist[2, 2] == 0
    assert f.dist[0, 0] == pytest.approx(2 * math.sqrt(2), abs=1e-12)
    assert f.dist[0, 2] == 2  # (x=2, y=0)


def test_zero_on_contour_and_nonnegative():
    rng = np.random.default_rng(3)
    m = rng.random((20, 30)) < 0.1
    f = compute_distance_transform(EdgeMap(m.astype(float)))
    assert np.all(f.dist[m] == 0)
    assert np.all(f.dist[~m] > 0)
    assert np.all(f.dist >= 0)


def test_grayscale_weights_count_as_contour():
    v = np.zeros((6, 6))
    v[1, 4] = 0.3
    f = compute_distance_transform(EdgeMap(v))
    assert f.dist[1, 4] == 0 and f.dist[1, 0] == 4


def test_empty_raises():
    with pytest.raises(EmptyContourError, match="no contour pixels"):
        compute_distance_transform(EdgeMap(np.zeros((4, 4))))


def test_edge_map_validation():
    with pytest.raises(ValueError):
        EdgeMap(np.zeros(5))
    with pytest.raises(ValueError):
        EdgeMap(np.full((3, 3), 2.0))
    e = EdgeMap.from_image(np.array([[0, 127], [128, 255]]))
    assert e.is_binary() and e.values.tolist() == [[0, 0], [1, 1]]
    assert e.points().tolist() == [[0, 1], [1, 1]]


def test_random_maps_match_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(30):
        h, w = rng.integers(1, 25, size=2)
        m = rng.random((h, w)) < rng.uniform(0.01, 0.5)
        if not m.any():
            m[rng.integers(h), rng.integers(w)] = True
        f = compute_distance_transform(EdgeMap(m.astype(float)))
        np.testing.assert_allclose(f.dist, brute_force_dt(m), rtol=0, atol=1e-9)


small_maps = arrays(np.bool_, st.tuples(st.integers(1, 16), st.integers(1, 16)), elements=st.booleans())


@settings(max_examples=80, deadline=None)
@given(small_maps, st.data())
def test_sparse_maps_oracle_exact(m, data):
    # at most 10 contour pixels, at least one
    idx = np.flatnonzero(m)[:10]
    mask = np.zeros(m.shape, dtype=bool)
    mask.flat[idx] = True
    if not mask.any():
        mask.flat[data.draw(st.integers(0, m.size - 1))] = True
    f = compute_distance_transform(EdgeMap(mask.astype(float)))
    assert np.array_equal(f.dist, brute_force_dt(mask))


@settings(max_examples=40, deadline=None)
@given(small_maps)
def test_one_lipschitz(m):
    if not m.any():
        m[0, 0] = True
    d = compute_distance_transform(EdgeMap(m.astype(float))).dist
    h, w = d.shape
    ys, xs = np.mgrid[0:h, 0:w]
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    vals = d.ravel()
    sep = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    assert np.all(np.abs(vals[:, None] - vals[None, :]) <= sep + 1e-12)


@settings(max_examples=40, deadline=None)
@given(small_maps, st.integers(0, 255))
def test_monotone_under_growth(m, k):
    if not m.any():
        m[0, 0] = True
    before = compute_distance_transform(EdgeMap(m.astype(float))).dist
    grown = m.copy()
    grown.flat[k % m.size] = True
    after = compute_distance_transform(EdgeMap(grown.astype(float))).dist
    assert np.all(after <= before)


def test_sample_gradient_radial():
    # a 9x9 grid leaves (4, 2) inside the central-difference margin
    f = compute_distance_transform(single((9, 9), 2, 2))
    g = sample_gradient(f, (4.0, 2.0))
    assert np.allclose(g, [1.0, 0.0], atol=0.15)


def test_sample_gradient_at_contour_is_small():
    f = compute_distance_transform(single((9, 9), 4, 4))
    assert np.linalg.norm(sample_gradient(f, (4, 4))) < 1


def test_sample_gradient_interpolates():
    f = compute_distance_transform(single((12, 12), 2, 6))
    gx, _ = gradient_grid(f)
    mid = sample_gradient(f, (6.5, 6.0))[0]
    assert mid == pytest.approx(0.5 * (gx[6, 6] + gx[6, 7]))


@pytest.mark.parametrize("x", [(0, 3), (3, 0), (7.5, 3), (3, 7.2), (-1, 4)])
def test_sample_gradient_margin_errors(x):
    f = compute_distance_transform(single((9, 9), 4, 4))
    with pytest.raises(ValueError, match="out of bounds"):
        sample_gradient(f, x)


def test_gradient_border_is_zero():
    f = compute_distance_transform(single((7, 8), 3, 3))
    for g in gradient_grid(f):
        assert not g[0].any() and not g[-1].any() and not g[:, 0].any() and not g[:, -1].any()


def test_eikonal_on_clean_pixels():
    rng = np.random.default_rng(11)
    for _ in range(5):
        m = rng.random((30, 30)) < 0.02
        m[15, 15] = True
        f = compute_distance_transform(EdgeMap(m.astype(float)))
        gx, gy = gradient_grid(f)
        n = np.hypot(gx, gy)[clean_pixels(m)]
        assert n.size > 100
        assert np.mean((n >= 0.85) & (n <= 1.15)) >= 0.99


def test_to_csv(tmp_path):
    f = compute_distance_transform(single((2, 3), 0, 0))
    p = tmp_path / "d.csv"
    f.to_csv(p)
    rows = p.read_text().splitlines()
    assert rows[0] == "0.000000,1.000000,2.000000"
    assert rows[1].startswith("1.000000,1.414214")


def test_distance_field_is_read_only():
    f = compute_distance_transform(single((3, 3), 1, 1))
    assert isinstance(f, DistanceField)
    with pytest.raises(ValueError):
        f.dist[0, 0] = 5
