from dataclasses import replace

import numpy as np
import pytest

from conftest import example_36, example_37
from snvtraffic import InitialData, simulate
from snvtraffic.characteristics import max_inversion, trace, velocity_at
from snvtraffic.errors import InvariantViolation
from snvtraffic.noise import NoisePath
from snvtraffic.solver import cfl_timestep


def test_constant_field_gives_straight_lines():
    cfg = replace(example_36(tau=0.0, mode="NV"), initial=InitialData.constant(0.4))
    traj = simulate(cfg, record_history=True)
    (tr,) = trace(traj, [(0.0, 0.2)])
    speed = traj.weights.total * 0.6
    np.testing.assert_allclose(tr.positions, 0.2 + speed * tr.times, rtol=0, atol=1e-13)
    assert tr.samples[0, 0] == 0.0 and tr.samples[0, 1] == 0.2
    assert np.all(np.diff(tr.times) > 0)


def test_saturated_noise_freezes_vehicles():
    cfg = replace(example_36(tau=0.5), initial=InitialData.constant(0.6))
    dt = cfl_timestep(cfg, cfg.weights())
    n = int(cfg.horizon / dt)
    path = NoisePath(values=np.full(n, -0.5), delta_r=dt, horizon=cfg.horizon, tau=0.5)
    traj = simulate(cfg, noise_path=path, record_history=True)
    t1 = traj.step_times[1]
    (tr,) = trace(traj, [(t1, 0.3)])
    assert np.all(tr.positions == 0.3)


def test_bad_starts_fail_individually():
    traj = simulate(example_36(), record_history=True)
    traces = trace(traj, [(0.0, -5.0), (0.0, 0.0), (0.0123456, 0.0)])
    assert traces[0].error is not None and not traces[0].ok
    assert traces[1].ok
    assert traces[2].error is not None


def test_exiting_paths_are_clipped():
    traj = simulate(example_36(), record_history=True)
    (tr,) = trace(traj, [(0.0, 2.3)])
    assert tr.clipped
    assert tr.positions[-1] == traj.config.grid.x_max


def test_history_required():
    with pytest.raises(InvariantViolation):
        trace(simulate(example_36()), [(0.0, 0.0)])


def test_nearest_and_interpolated_lookup():
    V = np.array([0.0, 1.0, 2.0])
    assert velocity_at(V, 0.04, 0.0, 0.1) == 0.0
    assert velocity_at(V, 0.06, 0.0, 0.1) == 1.0
    assert velocity_at(V, 0.06, 0.0, 0.1, interpolate=True) == pytest.approx(0.6)
    assert velocity_at(V, 0.5, 0.0, 0.1) == 2.0


def test_paths_do_not_cross():
    traj = simulate(example_37(seed=3), record_history=True)
    starts = [(0.0, x) for x in np.linspace(-1.5, 2.5, 20)]
    assert max_inversion(trace(traj, starts)) <= traj.config.grid.dx


def test_noisy_paths_enter_congestion_faster():
    base = example_37()
    dt = cfl_timestep(base, base.weights())
    nv = trace(simulate(replace(base, mode="NV"), dt=dt, record_history=True), [(0.0, -0.5)])[0]
    ends = [
        trace(simulate(replace(base, noise=replace(base.noise, realization_index=i)), dt=dt, record_history=True),
              [(0.0, -0.5)])[0].positions[-1]
        for i in range(10)
    ]
    assert np.mean(ends) > nv.positions[-1]
