import numpy as np
import pytest

from msllr.metrics import EvalReport, evaluate, nmse, snr
from msllr.phantom import ParameterMaps, generate_phantom

from conftest import crandn


def test_snr_examples(rng):
    x = crandn(rng, 4, 4, 3)
    assert snr(x, x) == float("inf")
    assert snr(x, 0.9 * x) == pytest.approx(20.0)
    assert snr(x, np.zeros_like(x)) == pytest.approx(0.0)


def test_snr_rejects_bad_input(rng):
    with pytest.raises(ValueError):
        snr(np.zeros((2, 2, 2)), np.ones((2, 2, 2)))
    with pytest.raises(ValueError):
        snr(np.ones((2, 2, 2)), np.ones((2, 2, 3)))


def test_nmse_examples():
    m = np.array([[1.0, 2.0], [0.0, 2.0]])
    assert nmse(m, m) == 0.0
    assert nmse(m, 2 * m) == pytest.approx(1.0)
    assert nmse(m, np.zeros_like(m)) == pytest.approx(1.0)
    assert nmse(m, m + np.array([[0, 0], [3, 0]]), mask=m > 0) == 0.0
    with pytest.raises(ValueError):
        nmse(np.zeros((2, 2)), m)


def test_nmse_is_scale_invariant(rng):
    a, b = rng.uniform(size=(2, 5, 5))
    assert nmse(7 * a, 7 * b) == pytest.approx(nmse(a, b), rel=1e-12)
    assert nmse(a, b) >= 0


def test_evaluate_rows(rng):
    maps = generate_phantom(16, 16)
    x = crandn(rng, 16, 16, 3)
    rep = evaluate(x, x, maps, maps, {"method": "llr", "L": 3, "trajectory": "pseudo-radial", "noise_sigma": 0.0})
    assert isinstance(rep, EvalReport)
    assert rep.nmse == {"t1": 0.0, "t2": 0.0, "pd": 0.0}
    rows = rep.rows()
    assert [r["metric"] for r in rows] == ["nmse_t1", "nmse_t2", "nmse_pd", "snr_db"]
    assert all(r["method"] == "llr" and r["L"] == 3 for r in rows)
    assert rows[-1]["value"] == float("inf")


def test_evaluate_foreground_excludes_background(rng):
    maps = generate_phantom(16, 16)
    noisy = ParameterMaps(np.where(maps.pd > 0, maps.t1, 999.0), maps.t2, maps.pd)
    x = crandn(rng, 16, 16, 2)
    rep = evaluate(x, 0.5 * x, maps, noisy, foreground=True)
    assert rep.nmse["t1"] > 0
    assert rep.nmse_foreground["t1"] == 0.0
    assert {r["metric"] for r in rep.rows()} >= {"nmse_fg_t1", "nmse_fg_t2", "nmse_fg_pd"}
