import numpy as np
import pytest

from msllr.nufft import NufftPlan, kb_kernel, kb_transform, kb_beta, ndft, nufft, nufft_adjoint

from conftest import crandn


def rel_max_err(a, ref):
    return np.max(np.abs(a - ref)) / np.max(np.abs(ref))


def test_forward_matches_direct_dft(rng):
    img = crandn(rng, 16, 16)
    coords = rng.uniform(-np.pi, np.pi, (200, 2))
    assert rel_max_err(nufft(img, coords), ndft(img, coords)) < 1e-4


def test_adjoint_matches_direct_dft(rng):
    coords = rng.uniform(-np.pi, np.pi, (200, 2))
    y = crandn(rng, 200)
    n = np.arange(16) - 8
    e = np.exp(1j * (coords[:, 0, None, None] * n[None, :, None] + coords[:, 1, None, None] * n[None, None, :]))
    ref = np.einsum("s,sab->ab", y, e) / 16
    assert rel_max_err(nufft_adjoint(y, coords, (16, 16)), ref) < 1e-4


def test_on_grid_matches_fft(rng):
    img = crandn(rng, 16, 12)
    k1 = 2 * np.pi * (np.arange(16) - 8) / 16
    k2 = 2 * np.pi * (np.arange(12) - 6) / 12
    coords = np.stack(np.meshgrid(k1, k2, indexing="ij"), -1).reshape(-1, 2)
    ref = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(img), norm="ortho"))
    assert rel_max_err(nufft(img, coords), ref.ravel()) < 1e-4


def test_dot_product(rng):
    coords = rng.uniform(-np.pi, np.pi, (300, 2))
    plan = NufftPlan((20, 18), coords)
    x, y = crandn(rng, 20, 18), crandn(rng, 300)
    lhs, rhs = np.vdot(plan.forward(x), y), np.vdot(x, plan.adjoint(y))
    assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(x) * np.linalg.norm(y)


def test_wider_kernel_is_more_accurate(rng):
    img = crandn(rng, 16, 16)
    coords = rng.uniform(-np.pi, np.pi, (200, 2))
    ref = ndft(img, coords)
    e4 = rel_max_err(nufft(img, coords, width=4), ref)
    e6 = rel_max_err(nufft(img, coords, width=6), ref)
    assert e6 < e4


def test_batched_forward(rng):
    coords = rng.uniform(-np.pi, np.pi, (50, 2))
    plan = NufftPlan((8, 8), coords)
    x = crandn(rng, 3, 8, 8)
    np.testing.assert_allclose(plan.forward(x)[1], plan.forward(x[1]), atol=1e-14)


def test_kernel_transform_against_quadrature():
    w, beta = 6, kb_beta(6, 2.0)
    u = np.linspace(-3, 3, 20001)
    for f in (0.0, 0.1, 0.3):
        num = np.trapezoid(kb_kernel(u, w, beta) * np.cos(2 * np.pi * f * u), u)
        assert num == pytest.approx(kb_transform(f, w, beta), rel=1e-6)


@pytest.mark.parametrize("bad", [np.zeros((3, 3)), np.full((2, 2), np.pi), np.full((2, 2), np.nan)])
def test_rejects_bad_coords(bad):
    with pytest.raises(ValueError):
        NufftPlan((8, 8), bad)
