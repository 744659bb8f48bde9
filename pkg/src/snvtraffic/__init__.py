"""Finite-volume simulation of nonlocal traffic flow with stochastic velocities."""

from .errors import ConfigError, DomainError, InvariantViolation
from .kernel import KernelSpec, KernelWeights, kernel_value, kernel_weights
from .noise import NoiseConfig, NoisePath, noise_at, sample_noise_path
from .solver import (
    BoundaryWarning,
    GridSpec,
    InitialData,
    SimState,
    SolverConfig,
    Trajectory,
    cfl_timestep,
    discrete_convolution,
    initial_cell_averages,
    simulate,
    step,
)
from .velocity import (
    StochasticVelocity,
    VelocityModel,
    expected_velocity,
    limited_velocity,
    limited_velocity_derivative,
    velocity_variance,
)

__version__ = "0.1.0"
