import json

import numpy as np
import pytest

import dualct


def test_klein_nishina_known_value():
    # Photon energy equal to the electron rest energy.
    assert dualct.klein_nishina(510.95) == pytest.approx(0.5743037892200577, rel=1e-9)
    with pytest.raises(Exception):
        dualct.photoelectric_basis(0.0)


def test_spectra_totals():
    assert dualct.default_low_spectrum().total_counts == pytest.approx(1.8e6, rel=1e-3)
    assert dualct.default_high_spectrum().total_counts == pytest.approx(3.6e6, rel=1e-3)


def test_forward_and_defbp_round_trip():
    grid = dualct.ImageGrid(20.0, 20.0, 32, 32)
    geom = dualct.ScanGeometry.parallel(grid, 30, 48)
    a = dualct.build_system_matrix(grid, geom)
    assert a.matrix.shape == (30 * 48, 32 * 32)

    truth = dualct.phantom(grid)
    low, high = dualct.default_low_spectrum(), dualct.default_high_spectrum()
    data = dualct.simulate(a, truth["c"], truth["p"], low, high)
    assert data.m_low.shape == (30 * 48,)
    assert np.all(data.m_low > -1e-12)

    c, p = dualct.defbp(data, geom, grid, low, high)
    assert dualct.rel_l2(c, truth["c"]) < 0.3
    assert grid.image(c).shape == (32, 32)


def test_metrics():
    a = np.array([True, True, False, False])
    b = np.array([True, False, True, False])
    assert dualct.dice(a, b) == pytest.approx(0.5)
    assert dualct.dice(a, a) == 1.0
    assert dualct.rel_l2(np.zeros(3), np.ones(3)) == pytest.approx(1.0)
    assert list(dualct.binarize_chi(np.array([0.2, 0.5, 0.9]))) == [False, True, True]


def test_presets_and_tiny_run(tmp_path):
    assert "phantom1-60db" in dualct.preset_names()
    cfg = json.loads(dualct.config_json("phantom1-60db"))
    cfg.update(name="tiny", methods=["defbp"])
    cfg["grid"].update(nx=16, ny=16)
    cfg["geometry"].update(views=8, detectors=24)
    rows = dualct.run_experiment(json.dumps(cfg), tmp_path / "tiny")
    assert [r["method"] for r in rows] == ["defbp"]
    assert (tmp_path / "tiny" / "metrics.csv").exists()


def test_material_table_ordering():
    rows = {name: inv_sq for name, _, inv_sq in dualct.material_table()}
    assert rows["aluminium"] > rows["water"]
