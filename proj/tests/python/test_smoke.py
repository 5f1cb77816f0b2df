"""Smoke tests for the pyflode extension module."""

import numpy as np
import pytest

pyflode = pytest.importorskip("pyflode")


def test_basis_partition_of_unity():
    grid = np.linspace(0.0, 1.0, 40)
    theta = pyflode.basis_matrix(grid, 12)
    assert theta.shape == (40, 12)
    assert np.allclose(theta.sum(axis=1), 1.0, atol=1e-10)
    assert theta.min() >= 0.0

    pen = pyflode.penalty_matrix(12, 0.001)
    assert np.allclose(pen, pen.T)
    assert np.linalg.eigvalsh(pen).min() > 0


def test_simulate_fit_predict_cycle():
    sim = pyflode.simulate(n_trials=30, grid_size=40, alpha=4.0, sigma2=1e-8,
                           sigma2_d=0.0, seed=3)
    fit = pyflode.fit(sim["grid"], sim["responses"], sim["forcings"], K=15,
                      random_effects=False)
    assert fit["converged"]
    assert abs(fit["alpha"] - 4.0) < 0.1

    pred = pyflode.predict(fit, sim["forcings"], sim["responses"][:, 0])
    assert pred.shape == sim["responses"].shape
    assert pyflode.mape(pred, sim["responses"], sim["grid"]) < 0.05

    surf = pyflode.surface(fit, coefficient=1)
    ise = pyflode.surface_ise(sim["grid"], surf, sim["truth_surface"])
    assert ise < 1e-2


def test_metrics_conventions():
    grid = np.linspace(0.0, 1.0, 20)
    truth = np.sin(np.pi * grid)
    assert pyflode.integrated_error(truth, truth, grid) == 0.0
    assert pyflode.alpha_error(4.0, 3.5) == pytest.approx(0.5)
    shifted = truth + 0.3
    assert pyflode.integrated_error(truth, shifted, grid) == pytest.approx(-0.3)


def test_bootstrap_bands_shape():
    sim = pyflode.simulate(n_trials=15, grid_size=25, alpha=2.0, sigma2=0.05,
                           sigma2_d=5.0, seed=5)
    bands = pyflode.bootstrap(sim["grid"], sim["responses"], sim["forcings"],
                              K=8, n_boot=4, seed=7)
    assert len(bands) == 2
    for band in bands:
        assert np.all(band["upper"] >= band["estimate"])
        assert np.all(band["lower"] <= band["estimate"])
        assert np.allclose(band["upper"] - band["estimate"],
                           1.96 * band["se"], atol=1e-12)


def test_baselines_run():
    sim = pyflode.simulate(n_trials=20, grid_size=25, alpha=4.0, sigma2=0.05,
                           sigma2_d=0.0, seed=11)
    hist = pyflode.fit_historical(sim["grid"], sim["responses"],
                                  sim["forcings"], basis_size=8,
                                  ridge_weight=0.1)
    assert hist["surfaces"][0].shape == (25, 25)
    conc = pyflode.fit_concurrent(sim["grid"], sim["responses"],
                                  sim["forcings"], K=8, ridge_weight=0.1)
    assert conc["coef_fns"][0].shape == (25,)
