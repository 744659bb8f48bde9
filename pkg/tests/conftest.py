import numpy as np
import pytest

from snvtraffic import (
    GridSpec,
    InitialData,
    KernelSpec,
    NoiseConfig,
    SolverConfig,
    StochasticVelocity,
    VelocityModel,
)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def plateau_36():
    return InitialData.plateau(1 / 3, 1.0, 1 / 3, 1 / 3, 2 / 3)


def example_36(tau=0.5, seed=1, mode="sNV", dx=0.01, T=1.0, output_times=()):
    return SolverConfig(
        grid=GridSpec(-1.0, 2.5, dx),
        kernel=KernelSpec(0.1),
        velocity=StochasticVelocity(VelocityModel("linear"), tau),
        initial=plateau_36(),
        horizon=T,
        noise=NoiseConfig(tau, master_seed=seed),
        mode=mode,
        output_times=tuple(output_times),
    )


def example_37(tau=0.8, seed=7, mode="sNV", dx=0.01, T=1.0, output_times=(), eta=0.2):
    return SolverConfig(
        grid=GridSpec(-2.5, 5.5, dx),
        kernel=KernelSpec(eta),
        velocity=StochasticVelocity(VelocityModel("quadratic"), tau),
        initial=InitialData.plateau(1 / 3, 1.0, 1 / 3, 0.0, 1.0),
        horizon=T,
        noise=NoiseConfig(tau, master_seed=seed),
        mode=mode,
        output_times=tuple(output_times),
    )


@pytest.fixture
def ex36():
    return example_36()


@pytest.fixture
def constant_cfg():
    return SolverConfig(
        grid=GridSpec(0.0, 1.0, 0.02),
        kernel=KernelSpec(0.1),
        velocity=StochasticVelocity(VelocityModel("linear"), 0.4),
        initial=InitialData.constant(0.6),
        horizon=0.5,
        noise=NoiseConfig(0.4, master_seed=5),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
