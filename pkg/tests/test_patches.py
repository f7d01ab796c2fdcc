import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msllr import patches as pg
from msllr.phantom import ParameterMaps, generate_phantom

from conftest import crandn


def test_index_128():
    idx = pg.build_patch_index(128, 128, 11, 5)
    rows = sorted({int(r) for r in idx.origins[:, 0]})
    assert len(rows) == 25 and rows[-1] == 117 and rows[-2] == 115
    assert idx.n_patches == 625
    assert idx.coverage.min() >= 1


def test_index_exact_fit():
    idx = pg.build_patch_index(11, 11, 11, 5)
    assert idx.n_patches == 1
    assert np.all(idx.coverage == 1)


def test_index_clamped_origin():
    idx = pg.build_patch_index(12, 12, 11, 5)
    assert sorted({int(r) for r in idx.origins[:, 0]}) == [0, 1]
    assert idx.coverage.max() == 4


def test_index_sorted_unique():
    idx = pg.build_patch_index(40, 33, 7, 3)
    keys = idx.origins[:, 0] * 1000 + idx.origins[:, 1]
    assert np.all(np.diff(keys) > 0)
    assert np.all(idx.origins + 7 <= np.array([40, 33]))


@pytest.mark.parametrize("args", [(10, 10, 11, 5), (20, 20, 5, 6), (20, 20, 5, 0)])
def test_index_errors(args):
    with pytest.raises(ValueError):
        pg.build_patch_index(*args)


def test_casorati_layout(rng):
    idx = pg.build_patch_index(9, 8, 3, 2)
    x = crandn(rng, 9, 8, 4)
    q = pg.extract_patches(x, idx)
    assert q.shape == (3 * 3 * 4, idx.n_patches)
    j = 5
    r, c = idx.origins[j]
    expected = np.concatenate([x[r:r + 3, c:c + 3, ch].ravel() for ch in range(4)])
    np.testing.assert_array_equal(q[:, j], expected)


def test_constant_image_columns():
    idx = pg.build_patch_index(10, 10, 4, 3)
    q = pg.extract_patches(np.full((10, 10), 2.5), idx)
    assert np.all(q == 2.5)


def test_single_patch_column(rng):
    idx = pg.build_patch_index(5, 5, 5, 5)
    x = rng.standard_normal((5, 5))
    np.testing.assert_array_equal(pg.extract_patches(x, idx)[:, 0], x.ravel())
    np.testing.assert_array_equal(pg.scatter_adjoint(x.reshape(-1, 1), idx)[:, :, 0], x)


def test_round_trip_with_coverage(rng):
    idx = pg.build_patch_index(17, 13, 5, 3)
    x = crandn(rng, 17, 13, 3)
    back = pg.scatter_adjoint(pg.extract_patches(x, idx), idx) / idx.coverage[:, :, None]
    np.testing.assert_allclose(back, x, atol=1e-12)


def test_scatter_of_ones_is_coverage():
    idx = pg.build_patch_index(16, 16, 5, 4)
    out = pg.scatter_adjoint(np.ones((25 * 2, idx.n_patches)), idx)
    for ch in range(2):
        np.testing.assert_array_equal(out[:, :, ch], idx.coverage)


def test_scatter_dot_product(rng):
    idx = pg.build_patch_index(14, 12, 5, 3)
    x = crandn(rng, 14, 12, 4)
    p = crandn(rng, 25 * 4, idx.n_patches)
    lhs = np.vdot(pg.extract_patches(x, idx), p)
    rhs = np.vdot(x, pg.scatter_adjoint(p, idx))
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_stack_matches_casorati(rng):
    idx = pg.build_patch_index(12, 12, 4, 3)
    x = crandn(rng, 12, 12, 3)
    stack = pg.patch_stack(x, idx)
    q = pg.extract_patches(x, idx)
    np.testing.assert_array_equal(stack.transpose(2, 1, 0).reshape(q.shape), q)
    np.testing.assert_array_equal(pg.scatter_stack(stack, idx), pg.scatter_adjoint(q, idx))


def test_weights_basic():
    maps = generate_phantom(32, 32, seed=0)
    idx = pg.build_patch_index(32, 32, 5, 3)
    w = pg.compute_weights(maps, idx)
    np.testing.assert_array_equal(w.w, w.w.T)
    assert np.all(np.diag(w.w) == 0)
    assert np.all((w.w >= 0) & (w.w <= 1))


def test_weights_against_double_loop():
    maps = generate_phantom(24, 24, seed=1)
    idx = pg.build_patch_index(24, 24, 5, 4)
    sigma = 3.0
    w = pg.compute_weights(maps, idx, sigma=sigma).w
    q = pg.extract_patches(pg.normalize_maps(maps), idx)
    n = idx.n_patches
    ref = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                ref[i, j] = np.exp(-np.sum((q[:, i] - q[:, j]) ** 2) / sigma ** 2)
    np.testing.assert_allclose(w, ref, atol=1e-12)


def test_weight_values():
    t1 = np.zeros((2, 4))
    t1[:, 2:] = 1.0
    maps = ParameterMaps(t1, np.zeros((2, 4)), np.ones((2, 4)))
    idx = pg.build_patch_index(2, 4, 2, 2)
    d2 = pg.pairwise_sq_distances(pg.extract_patches(maps.stack(), idx))
    w = pg.compute_weights(maps, idx, sigma=float(np.sqrt(d2[0, 1])), normalize=False)
    assert w.w[0, 1] == pytest.approx(np.exp(-1))
    same = pg.compute_weights(ParameterMaps(np.ones((2, 4)), np.ones((2, 4)), np.ones((2, 4))), idx, sigma=1.0)
    assert same.w[0, 1] == 1.0


def test_auto_sigma_is_median():
    maps = generate_phantom(24, 24, seed=1)
    idx = pg.build_patch_index(24, 24, 5, 4)
    w = pg.compute_weights(maps, idx)
    d2 = pg.pairwise_sq_distances(pg.extract_patches(pg.normalize_maps(maps), idx))
    off = d2[~np.eye(len(d2), dtype=bool)]
    assert w.sigma ** 2 == pytest.approx(np.median(off[off > 0]))


def test_single_patch_weights():
    maps = generate_phantom(16, 16)
    w = pg.compute_weights(maps, pg.build_patch_index(16, 16, 16, 16))
    assert w.w.shape == (1, 1) and w.w[0, 0] == 0


def test_knn_sparsifies():
    maps = generate_phantom(32, 32, seed=0)
    idx = pg.build_patch_index(32, 32, 5, 3)
    w = pg.compute_weights(maps, idx, knn=3).w
    np.testing.assert_array_equal(w, w.T)
    assert np.all((w > 0).sum(axis=1) >= 1)
    assert (w > 0).sum() < 0.5 * w.size


def test_laplacian_example():
    w = np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0]], float)
    np.testing.assert_array_equal(pg.build_laplacian(w), [[3, -1, -2], [-1, 4, -3], [-2, -3, 5]])
    assert np.all(pg.build_laplacian(np.zeros((4, 4))) == 0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_laplacian_psd_and_row_sums(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(50, 50))
    w = np.triu(a, 1)
    w = w + w.T
    lap = pg.build_laplacian(w)
    assert np.max(np.abs(lap.sum(axis=1))) <= 1e-10
    assert np.linalg.eigvalsh(lap).min() >= -1e-10
    off = lap[~np.eye(50, dtype=bool)]
    assert np.all(off <= 0)


def pairwise_penalty(x, w, idx):
    q = pg.extract_patches(x, idx)
    n = q.shape[1]
    return sum(w[i, j] * np.sum(np.abs(q[:, i] - q[:, j]) ** 2) for i in range(n) for j in range(n) if i != j)


def test_trace_form_equals_half_ordered_sum(rng):
    idx = pg.build_patch_index(8, 8, 3, 2)
    x = crandn(rng, 8, 8, 4)
    a = rng.uniform(size=(idx.n_patches,) * 2)
    w = np.triu(a, 1) + np.triu(a, 1).T
    trace = pg.manifold_penalty(x, pg.build_laplacian(w), idx)
    ordered = pairwise_penalty(x, w, idx)
    assert abs(trace - 0.5 * ordered) <= 1e-8 * trace


def test_penalty_properties(rng):
    idx = pg.build_patch_index(8, 8, 3, 2)
    a = rng.uniform(size=(idx.n_patches,) * 2)
    lap = pg.build_laplacian(np.triu(a, 1) + np.triu(a, 1).T)
    const = np.ones((8, 8, 4)) * (1 + 2j)
    assert pg.manifold_penalty(const, lap, idx) == pytest.approx(0, abs=1e-10)
    x = crandn(rng, 8, 8, 4)
    assert pg.manifold_penalty(3 * x, lap, idx) == pytest.approx(9 * pg.manifold_penalty(x, lap, idx), rel=1e-10)
    with pytest.raises(ValueError):
        pg.manifold_penalty(x, np.eye(3), idx)


def test_manifold_gradient_is_half_gradient(rng):
    idx = pg.build_patch_index(6, 6, 3, 2)
    a = rng.uniform(size=(idx.n_patches,) * 2)
    lap = pg.build_laplacian(np.triu(a, 1) + np.triu(a, 1).T)
    x = rng.standard_normal((6, 6, 2))
    g = pg.manifold_gradient(x, lap, idx)
    h = 1e-6
    e = np.zeros_like(x)
    e[2, 3, 1] = 1
    fd = (pg.manifold_penalty(x + h * e, lap, idx) - pg.manifold_penalty(x - h * e, lap, idx)) / (2 * h)
    assert fd == pytest.approx(2 * g[2, 3, 1], rel=1e-6)
