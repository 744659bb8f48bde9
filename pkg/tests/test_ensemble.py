from dataclasses import replace

import numpy as np
import pytest

from conftest import example_36
from snvtraffic import simulate
from snvtraffic.ensemble import EnsembleConfig, distance_metrics, moment_overlay, run_ensemble, stats_digest
from snvtraffic.errors import ConfigError, DomainError
from snvtraffic.velocity import StochasticVelocity, VelocityModel


def small(tau=0.5, **kw):
    return example_36(tau=tau, T=0.3, output_times=(0.1, 0.3), **kw)


def test_zero_noise_ensemble_is_the_nv_solution():
    stats = run_ensemble(EnsembleConfig(small(tau=0.0), 5))
    for k in range(2):
        np.testing.assert_array_equal(stats.mean[k], stats.reference[k])
        np.testing.assert_array_equal(stats.variance[k], 0.0)
        np.testing.assert_array_equal(stats.quantiles[0.05][k], stats.quantiles[0.95][k])
        assert stats.distances[k]["scaled"]["Linf"] == 0.0


def test_single_realization():
    cfg = small()
    stats = run_ensemble(EnsembleConfig(cfg, 1, reference="none"))
    assert stats.variance is None
    assert stats.reference is None and stats.distances == []
    alone = simulate(cfg)
    np.testing.assert_array_equal(stats.mean[-1], alone.final.rho)


def test_statistics_match_direct_computation():
    cfg = small()
    stats = run_ensemble(EnsembleConfig(cfg, 12, quantiles=(0.1, 0.5, 0.9), keep_samples=True))
    runs = np.stack([
        simulate(replace(cfg, noise=replace(cfg.noise, realization_index=i))).final.rho for i in range(12)
    ])
    np.testing.assert_array_equal(stats.samples[:, -1], runs)
    np.testing.assert_allclose(stats.mean[-1], runs.mean(axis=0), rtol=0, atol=1e-15)
    np.testing.assert_allclose(stats.variance[-1], runs.var(axis=0, ddof=1), rtol=1e-12, atol=1e-17)
    for q in (0.1, 0.5, 0.9):
        np.testing.assert_allclose(stats.quantiles[q][-1], np.quantile(runs, q, axis=0), rtol=0, atol=1e-15)
    assert np.all(stats.minimum <= stats.mean + 1e-15) and np.all(stats.mean <= stats.maximum + 1e-15)
    assert np.all(stats.quantiles[0.1] <= stats.quantiles[0.5])
    assert np.all(stats.quantiles[0.5] <= stats.quantiles[0.9])


def test_independent_of_threads_and_batching():
    cfg = small()
    a = run_ensemble(EnsembleConfig(cfg, 20, threads=1, batch_size=32))
    b = run_ensemble(EnsembleConfig(cfg, 20, threads=4, batch_size=3))
    assert stats_digest(a) == stats_digest(b)


def test_reference_shares_the_time_grid():
    cfg = small()
    stats = run_ensemble(EnsembleConfig(cfg, 3, reference="NV"))
    nv = simulate(replace(cfg, mode="NV"), dt=stats.dt)
    np.testing.assert_array_equal(stats.reference[-1], nv.final.rho)


def test_config_validation():
    with pytest.raises(ConfigError):
        EnsembleConfig(small(), 0)
    with pytest.raises(ConfigError):
        EnsembleConfig(small(), 5, quantiles=(0.0, 0.5))
    with pytest.raises(ConfigError):
        EnsembleConfig(small(), 5, reference="LWR")
    with pytest.raises(ConfigError):
        EnsembleConfig(replace(small(), mode="NV"), 5)


def test_distance_hand_case():
    d = distance_metrics([0.5, -0.5], [0.0, 0.0], 0.1)
    assert d["scaled"] == pytest.approx({"L1": 0.1, "L2": 0.05, "Linf": 0.5})
    assert d["unscaled"] == pytest.approx({"L1": 1.0, "L2": 0.5, "Linf": 0.5})
    same = distance_metrics([0.3, 0.2], [0.3, 0.2], 0.1)
    assert all(v == 0.0 for norm in same.values() for v in norm.values())
    with pytest.raises(DomainError):
        distance_metrics([1.0], [1.0, 2.0], 0.1)


def test_moment_overlay():
    sv = StochasticVelocity(VelocityModel("quadratic"), 0.8)
    ov = moment_overlay(sv, np.linspace(0, 1, 101))
    assert ov["rho_star"] == pytest.approx(0.4472135955, abs=1e-9)
    free = ov["v"] >= 0.8
    np.testing.assert_array_equal(ov["mean"][free], ov["v"][free])
    np.testing.assert_allclose(ov["variance"][free], 0.64 / 3, rtol=1e-14)
    assert np.all(ov["mean"] >= ov["v"])
    assert np.all(ov["lower"] <= ov["mean"]) and np.all(ov["mean"] <= ov["upper"])
    flat = moment_overlay(StochasticVelocity(VelocityModel("quadratic"), 0.0), np.linspace(0, 1, 11))
    np.testing.assert_array_equal(flat["mean"], flat["v"])
    np.testing.assert_array_equal(flat["variance"], 0.0)
