import numpy as np
import pytest

from msllr.dictionary import build_default_grid, match
from msllr.phantom import TISSUES, ParameterMaps, casorati, generate_phantom, synthesize_mrf_data
from msllr.sequence import simulate_fingerprint


def test_phantom_value_range():
    maps = generate_phantom(128, 128, seed=1)
    fg = maps.pd > 0
    assert maps.t1[fg].min() >= 100 and maps.t1[fg].max() <= 5000
    assert np.all(maps.t1[fg] >= maps.t2[fg])
    assert np.all(maps.t1[~fg] == 0) and np.all(maps.t2[~fg] == 0)
    maps.validate()


def test_phantom_contains_all_tissues():
    maps = generate_phantom(128, 128, seed=0)
    present = {(a, b) for a, b in zip(maps.t1[maps.pd > 0], maps.t2[maps.pd > 0])}
    assert present == {(t1, t2) for t1, t2, _ in TISSUES.values()}


def test_phantom_deterministic():
    a, b = generate_phantom(64, 64, seed=3), generate_phantom(64, 64, seed=3)
    for name in ("t1", "t2", "pd"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_tissues_on_default_grid():
    grid = build_default_grid()
    for t1, t2, _ in TISSUES.values():
        assert t1 in grid.t1_values and t2 in grid.t2_values


def test_phantom_too_small():
    with pytest.raises(ValueError):
        generate_phantom(8, 8)


def test_background_voxel_has_zero_series(seq60):
    maps = generate_phantom(32, 32, seed=0)
    x = synthesize_mrf_data(maps, seq60)
    assert np.all(x[maps.pd == 0] == 0)


def test_single_tissue_phantom(seq60):
    pd = np.zeros((16, 16))
    pd[4:10, 5:12] = 0.8
    maps = ParameterMaps(np.where(pd > 0, 1200.0, 0), np.where(pd > 0, 110.0, 0), pd)
    x = synthesize_mrf_data(maps, seq60)
    ref = simulate_fingerprint(1200.0, 110.0, seq60)
    np.testing.assert_array_equal(x[pd > 0], 0.8 * np.broadcast_to(ref, (int((pd > 0).sum()), 60)))


def test_cache_equals_per_voxel(seq60):
    maps = generate_phantom(20, 20, seed=2)
    x = synthesize_mrf_data(maps, seq60)
    for i, j in zip(*np.nonzero(maps.pd)):
        ref = maps.pd[i, j] * simulate_fingerprint(maps.t1[i, j], maps.t2[i, j], seq60)
        np.testing.assert_array_equal(x[i, j], ref)


def test_pd_linearity(seq60):
    maps = generate_phantom(24, 24, seed=0)
    np.testing.assert_allclose(synthesize_mrf_data(maps.scaled_pd(3.0), seq60),
                               3.0 * synthesize_mrf_data(maps, seq60), rtol=1e-14, atol=0)


def test_round_trip_exact(seq60, dict60):
    maps = generate_phantom(32, 32, seed=4)
    rec = match(synthesize_mrf_data(maps, seq60), dict60)
    np.testing.assert_array_equal(rec.t1, maps.t1)
    np.testing.assert_array_equal(rec.t2, maps.t2)
    np.testing.assert_allclose(rec.pd, maps.pd, rtol=1e-12, atol=1e-12)


def test_casorati_row_major(seq60):
    x = np.arange(2 * 3 * 4).reshape(2, 3, 4)
    c = casorati(x)
    assert c.shape == (6, 4)
    np.testing.assert_array_equal(c[4], x[1, 1])


def test_invalid_maps():
    with pytest.raises(ValueError):
        ParameterMaps(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))
    bad = ParameterMaps(np.full((2, 2), 50.0), np.full((2, 2), 100.0), np.ones((2, 2)))
    with pytest.raises(ValueError):
        bad.validate()
