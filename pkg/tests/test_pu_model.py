import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshreg.placement import PlacementConfig, regular_patches
from meshreg.pu_model import (
    MeshlessModel,
    MonomialBasis,
    OutsideCoverageError,
    Patch,
    PatchLayout,
    basis_eval,
    blend,
    consistency_energy,
    consistency_gradient,
    consistency_gradients,
    consistency_pair,
    pascal_exponents,
    patch_weight,
    shift_matrices,
    shift_operator,
    weight,
)
from oracles import central_diff, poly_eval

# ----------------------------------------------------------------- weight

def test_weight_values():
    assert weight(0) == 0.75
    assert weight(1.5) == 0 and weight(2.0) == 0
    assert weight(0.5) == 0.5
    assert 0.75 - 0.5 ** 2 == 0.5 * (1.5 - 0.5) ** 2


def test_weight_rejects_negative():
    with pytest.raises(ValueError):
        weight(-0.1)


@settings(max_examples=50)
@given(st.floats(0, 3), st.floats(0, 3))
def test_weight_nonincreasing(a, b):
    lo, hi = sorted((a, b))
    assert weight(lo) >= weight(hi) >= 0


def test_patch_weight_examples():
    p = Patch((0, 0), 10)
    assert patch_weight(p, (0, 0)) == 0.75
    assert patch_weight(p, (15, 0)) == 0
    half = Patch((0, 0), 10, 0.5)
    pts = np.random.default_rng(0).uniform(-16, 16, size=(40, 2))
    np.testing.assert_allclose(patch_weight(half, pts), 0.5 * patch_weight(p, pts), rtol=0, atol=0)


@pytest.mark.parametrize("kw", [dict(radius=0), dict(radius=-1), dict(influence=0), dict(influence=1.5)])
def test_patch_validation(kw):
    args = dict(center=(0, 0), radius=5, influence=1.0) | kw
    with pytest.raises(ValueError):
        Patch(**args)


# ------------------------------------------------------------------ basis

def test_pascal_exponents():
    assert pascal_exponents(0) == [(0, 0)]
    assert pascal_exponents(1) == [(0, 0), (1, 0), (0, 1), (1, 1)]
    two = pascal_exponents(2)
    assert two[:6] == [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2)]
    assert two[6:] == [(2, 1), (1, 2), (2, 2)]
    assert pascal_exponents(2, "total") == [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2)]
    assert pascal_exponents(1, "total") == [(0, 0), (1, 0), (0, 1)]
    with pytest.raises(ValueError):
        pascal_exponents(-1)
    with pytest.raises(ValueError):
        pascal_exponents(1, "bogus")


def test_basis_eval():
    b = MonomialBasis(2)
    assert basis_eval(b, (0, 0)).tolist() == [1, 0, 0, 0, 0, 0, 0, 0, 0]
    assert basis_eval(b, (2, 3))[:6].tolist() == [1, 2, 3, 6, 4, 9]
    for order in range(4):
        for fam in ("tensor", "total"):
            bb = MonomialBasis(order, fam)
            assert basis_eval(bb, (0.3, 0.7)).shape == (bb.size,)
    assert b.eval(np.zeros((5, 7, 2))).shape == (5, 7, 9)


def test_derivative_matrix_matches_differentiation():
    b = MonomialBasis(3)
    d = np.random.default_rng(1).normal(size=b.size)
    x = np.array([0.7, -1.3])
    for eta in [(1, 0), (0, 1), (1, 1), (2, 0)]:
        D = b.derivative_matrix(eta)
        h = 1e-4
        f = lambda p: d @ b.eval(p)  # noqa: E731
        if eta == (1, 0):
            num = (f(x + [h, 0]) - f(x - [h, 0])) / (2 * h)
        elif eta == (0, 1):
            num = (f(x + [0, h]) - f(x - [0, h])) / (2 * h)
        elif eta == (1, 1):
            num = (f(x + [h, h]) - f(x + [h, -h]) - f(x + [-h, h]) + f(x - [h, h])) / (4 * h * h)
        else:
            num = (f(x + [h, 0]) - 2 * f(x) + f(x - [h, 0])) / (h * h)
        assert (D @ d) @ b.eval(x) == pytest.approx(num, rel=1e-5, abs=1e-6)


# ------------------------------------------------------------------ shift

def printed_shift_matrix(dx, dy):
    """The 6x6 second-order operator as printed, rows read left to right."""
    return np.array([
        [1, dx, dy, dx * dy, dx * dx, dy * dy],
        [0, 1, 0, dy, 2 * dx, 0],
        [0, 0, 1, dx, 0, 2 * dy],
        [0, 0, 0, 1, 0, 0],
        [0, 0, 0, 0, 1, 0],
        [0, 0, 0, 0, 0, 1],
    ])


@pytest.mark.parametrize("delta", [(0.5, -2.0), (3.0, 1.25), (-1.5, 0.0)])
def test_shift_matches_printed_matrix(delta):
    want = printed_shift_matrix(*delta)
    tri = shift_operator(MonomialBasis(2, "total"), delta).matrix
    np.testing.assert_allclose(tri, want, rtol=0, atol=1e-12)
    ten = shift_operator(MonomialBasis(2), delta).matrix
    np.testing.assert_allclose(ten[:6, :6], want, rtol=0, atol=1e-12)
    dx, dy = delta
    assert ten[0, :6].tolist() == pytest.approx([1, dx, dy, dx * dy, dx * dx, dy * dy])


def test_shift_identity_and_triangular():
    for order in range(4):
        b = MonomialBasis(order)
        assert np.array_equal(shift_operator(b, (0, 0)).matrix, np.eye(b.size))
        S = shift_operator(b, (1.7, -0.4)).matrix
        assert np.allclose(np.tril(S, -1), 0) and np.all(np.diag(S) == 1)


def test_shift_composition_random():
    rng = np.random.default_rng(2)
    for _ in range(50):
        b = MonomialBasis(int(rng.integers(0, 4)))
        a, c = rng.uniform(-2, 2, size=(2, 2))
        lhs = (shift_operator(b, a) @ shift_operator(b, c)).matrix
        np.testing.assert_allclose(lhs, shift_operator(b, a + c).matrix, rtol=0, atol=1e-12)


def test_basis_shift_identity_random():
    rng = np.random.default_rng(3)
    for _ in range(50):
        b = MonomialBasis(int(rng.integers(0, 4)), ["tensor", "total"][int(rng.integers(2))])
        delta, x = rng.uniform(-3, 3, size=(2, 2))
        # direct monomial evaluation at the shifted point is the oracle
        want = np.array([poly_eval([e], [1.0], x + delta) for e in b.exponents])
        got = shift_operator(b, delta).matrix.T @ basis_eval(b, x)
        assert np.linalg.norm(want - got) <= 1e-9


def test_shift_matrices_batch():
    b = MonomialBasis(2)
    deltas = np.array([[0, 0], [1, 2], [-3, 0.5]])
    stack = shift_matrices(b, deltas)
    for k, d in enumerate(deltas):
        assert np.array_equal(stack[k], shift_operator(b, d).matrix)


# ------------------------------------------------------------------ blend

def grid_model(basis, width=40, height=40, spacing=8, radius=10, coeffs=None):
    patches = regular_patches(width, height, PlacementConfig(spacing=spacing, radius=radius))
    model = MeshlessModel.zeros(basis, patches, width, height)
    return model if coeffs is None else model.with_coeffs(coeffs)


def global_model(basis, D, **kw):
    """Every local model set to the shifted restriction of one global polynomial."""
    m = grid_model(basis, **kw)
    S = shift_matrices(basis, m.layout.centers)
    return m.with_coeffs(np.einsum("kij,jc->kic", S, D))


def covered_points(model, n, rng):
    pts = rng.uniform(0, [model.width - 1, model.height - 1], size=(4 * n, 2))
    ok = model.layout.weights_at(pts).sum(axis=1) > 0
    return pts[ok][:n]


def test_partition_of_unity_random_points():
    rng = np.random.default_rng(4)
    patches = [Patch(rng.uniform(0, 30, 2), rng.uniform(3, 9), rng.uniform(0.2, 1)) for _ in range(12)]
    m = MeshlessModel.zeros(MonomialBasis(1), patches, 30, 30)
    pts = covered_points(m, 200, rng)
    np.testing.assert_allclose(m.partition_weights(pts).sum(axis=1), 1.0, rtol=0, atol=1e-12)
    op = m.layout.raster
    # constant-monomial columns carry r_p(x) itself
    ratios = op.matrix[:, :: op.nb].sum(axis=1).A1
    np.testing.assert_allclose(ratios[op.coverage.ravel()], 1.0, rtol=0, atol=1e-12)


def test_outside_coverage():
    m = MeshlessModel.zeros(MonomialBasis(1), [Patch((0, 0), 2)], 20, 20)
    with pytest.raises(OutsideCoverageError, match="outside patch coverage"):
        blend(m, (10, 10))
    assert not m.layout.raster.coverage[10, 10]


def test_blend_zero_and_single_constant():
    b = MonomialBasis(2)
    m = grid_model(b)
    rng = np.random.default_rng(5)
    pts = covered_points(m, 30, rng)
    assert not blend(m, pts).any()
    c = np.zeros((1, b.size, 2))
    c[0, 0, 0] = 2.5
    single = MeshlessModel.zeros(b, [Patch((10, 10), 4)], 20, 20).with_coeffs(c)
    inside = np.array([[10, 10], [13, 12], [15.9, 10]])
    np.testing.assert_allclose(blend(single, inside), [[2.5, 0]] * 3, rtol=0, atol=1e-14)


@pytest.mark.parametrize("order,family", [(0, "tensor"), (1, "tensor"), (2, "tensor"), (1, "total"), (2, "total")])
def test_polynomial_reproduction(order, family):
    b = MonomialBasis(order, family)
    rng = np.random.default_rng(order)
    D = rng.normal(size=(b.size, 2)) / 10.0 ** b.degrees[:, None]
    m = global_model(b, D)
    pts = covered_points(m, 100, rng)
    want = np.array([[poly_eval(b.exponents, D[:, c], p) for c in range(2)] for p in pts])
    assert np.max(np.abs(blend(m, pts) - want)) <= 1e-9
    assert consistency_energy(m) <= 1e-12
    ux, uy = m.layout.raster.blend(m.coeffs)
    ys, xs = np.nonzero(m.layout.raster.coverage)
    grid_want = np.array([poly_eval(b.exponents, D[:, 0], (x, y)) for x, y in zip(xs, ys)])
    assert np.max(np.abs(ux[ys, xs] - grid_want)) <= 1e-9


def test_raster_blend_matches_pointwise():
    b = MonomialBasis(1)
    rng = np.random.default_rng(6)
    m = grid_model(b, 25, 20, 6, 7, coeffs=rng.normal(size=(20, b.size, 2)))
    ux, uy = m.layout.raster.blend(m.coeffs)
    ys, xs = np.mgrid[0:20, 0:25]
    pts = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
    u = blend(m, pts)
    np.testing.assert_allclose(ux.ravel(), u[:, 0], atol=1e-12)
    np.testing.assert_allclose(uy.ravel(), u[:, 1], atol=1e-12)


# ------------------------------------------------------------ consistency

def two_patch(b, dp, dq, cp=(0, 0), cq=(3, 1)):
    return MeshlessModel.zeros(b, [Patch(cp, 5), Patch(cq, 5)], 10, 10).with_coeffs(np.stack([dp, dq]))


def test_consistency_pair_examples():
    b = MonomialBasis(1)
    const = np.zeros((b.size, 2))
    const[0] = [1.5, -2]
    assert consistency_pair(two_patch(b, const, const), 0, 1) == 0
    D = np.random.default_rng(7).normal(size=(b.size, 2))
    cp, cq = np.array([0.0, 0.0]), np.array([3.0, 1.0])
    m = two_patch(b, shift_operator(b, cp).matrix @ D, shift_operator(b, cq).matrix @ D, cp, cq)
    assert consistency_pair(m, 0, 1) <= 1e-12
    e = np.zeros((b.size, 2))
    e[2, 1] = 1
    same = MeshlessModel.zeros(b, [Patch((4, 4), 3), Patch((4, 4), 3)], 10, 10).with_coeffs(np.stack([D + e, D]))
    assert consistency_pair(same, 0, 1) == pytest.approx(1.0, abs=1e-12)


def test_consistency_energy_examples():
    b = MonomialBasis(1)
    rng = np.random.default_rng(8)
    one = MeshlessModel.zeros(b, [Patch((5, 5), 4)], 10, 10).with_coeffs(rng.normal(size=(1, b.size, 2)))
    assert consistency_energy(one) == 0
    m = grid_model(b, 30, 30, 6, 8, coeffs=rng.normal(size=(36, b.size, 2)))
    assert consistency_energy(m.with_coeffs(2 * m.coeffs)) == pytest.approx(4 * consistency_energy(m), rel=1e-12)
    assert consistency_energy(m) > 0


def test_consistency_energy_matches_double_sum():
    b = MonomialBasis(1)
    rng = np.random.default_rng(9)
    patches = [Patch(rng.uniform(0, 12, 2), rng.uniform(4, 8), rng.uniform(0.3, 1)) for _ in range(6)]
    m = MeshlessModel.zeros(b, patches, 12, 12).with_coeffs(rng.normal(size=(6, b.size, 2)))
    total = 0.0
    for p, P in enumerate(patches):
        for q, Q in enumerate(patches):
            dist = np.hypot(P.center[0] - Q.center[0], P.center[1] - Q.center[1])
            total += Q.influence * weight(dist / Q.radius) * consistency_pair(m, p, q)
    assert consistency_energy(m) == pytest.approx(total / 6, rel=1e-12)


def test_consistency_gradient_examples():
    b = MonomialBasis(2)
    m = grid_model(b, 30, 30, 6, 8)
    assert not consistency_gradients(m).any()
    D = np.random.default_rng(10).normal(size=(b.size, 2)) / 10.0 ** b.degrees[:, None]
    g = global_model(b, D, width=30, height=30, spacing=6, radius=8)
    assert np.max(np.abs(consistency_gradients(g))) <= 1e-10


@pytest.mark.parametrize("seed", range(3))
def test_consistency_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    b = MonomialBasis(1)
    patches = [Patch(rng.uniform(0, 10, 2), rng.uniform(4, 8)) for _ in range(5)]
    m = MeshlessModel.zeros(b, patches, 10, 10).with_coeffs(rng.normal(size=(5, b.size, 2)))
    for p in range(5):
        def f(dp):
            c = m.coeffs.copy()
            c[p] = dp
            return consistency_energy(m.with_coeffs(c))
        num = central_diff(f, m.coeffs[p].copy())
        ana = consistency_gradient(m, p)
        assert np.linalg.norm(ana - num) <= 1e-6 * max(np.linalg.norm(num), 1e-12)


def test_model_json_round_trip():
    b = MonomialBasis(2, "total")
    rng = np.random.default_rng(12)
    m = grid_model(b, 20, 20, 10, 9, coeffs=rng.normal(size=(9, b.size, 2)))
    back = MeshlessModel.from_json(json.loads(m.dumps()))
    assert back.basis == b and back.width == 20 and back.height == 20
    assert np.array_equal(back.coeffs, m.coeffs)
    assert back.patches == m.patches


def test_coefficients_read_only():
    m = grid_model(MonomialBasis(1))
    with pytest.raises(ValueError):
        m.coeffs[0, 0, 0] = 1


def test_layout_requires_patches():
    with pytest.raises(ValueError):
        PatchLayout(MonomialBasis(1), [], 5, 5)
