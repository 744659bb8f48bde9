"""Godunov-type finite-volume scheme for the stochastic nonlocal velocity model.

Boundary policy: the computational window stands in for the real line.  The
upwind value entering cell 0 is cell 0 itself (zero-gradient inflow) and the
``n_eta`` look-ahead ghosts right of the window are frozen at the initial
right-most cell average.  Waves must stay clear of both edges; a
:class:`BoundaryWarning` is issued otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._kernels import convolve_and_update
from .errors import ConfigError, DomainError, InvariantViolation
from .kernel import KernelSpec, KernelWeights, kernel_weights
from .noise import NoiseConfig, NoisePath, sample_noise_path
from .velocity import StochasticVelocity

MODES = ("sNV", "NV", "NV-expected-velocity")

BOUNDS_TOL = 1e-12
BOUNDARY_TOL = 1e-8
_TIME_SLACK = 1e-9


class BoundaryWarning(UserWarning):
    """The solution near an edge of the window moved away from its initial value."""


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    dx: float

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ConfigError("grid.x_max must exceed grid.x_min")
        if not self.dx > 0:
            raise ConfigError(f"grid.dx must be positive, got {self.dx!r}")
        if self.n_cells < 1:
            raise ConfigError("grid holds no cells")

    @property
    def n_cells(self) -> int:
        return int(round((self.x_max - self.x_min) / self.dx))

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def interfaces(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_cells + 1) * self.dx


@dataclass(frozen=True)
class InitialData:
    """Initial density: piecewise constant (``plateau``/``steps``) or a callable ``profile``.

    For piecewise-constant data ``values[i]`` holds on ``[breaks[i-1], breaks[i])``
    with open-ended first and last pieces.
    """

    kind: str
    breaks: tuple = ()
    values: tuple = ()
    func: Optional[Callable] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind in ("plateau", "steps"):
            if len(self.values) != len(self.breaks) + 1:
                raise ConfigError("initial data needs exactly one more value than breakpoints")
            if any(b2 < b1 for b1, b2 in zip(self.breaks, self.breaks[1:])):
                raise ConfigError("initial breakpoints must be sorted")
        elif self.kind == "profile":
            if self.func is None:
                raise ConfigError("profile initial data needs a callable")
        else:
            raise ConfigError(f"initial.kind must be plateau, steps or profile, got {self.kind!r}")

    @classmethod
    def plateau(cls, left, inside, right, a, b):
        if not b > a:
            raise ConfigError("plateau needs a < b")
        return cls("plateau", (float(a), float(b)), (float(left), float(inside), float(right)))

    @classmethod
    def constant(cls, value):
        return cls("steps", (), (float(value),))

    @classmethod
    def steps(cls, breaks, values):
        return cls("steps", tuple(float(b) for b in breaks), tuple(float(v) for v in values))

    @classmethod
    def profile(cls, func):
        return cls("profile", func=func)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "profile":
            return np.asarray(self.func(x), dtype=float)
        idx = np.searchsorted(np.asarray(self.breaks), x, side="right")
        return np.asarray(self.values)[idx]

    def distinct_values(self) -> list[float]:
        if self.kind == "profile":
            return []
        return sorted(set(self.values))

    def cell_averages(self, grid: GridSpec) -> np.ndarray:
        if self.kind == "profile":
            nodes, weights = np.polynomial.legendre.leggauss(8)
            left = grid.interfaces[:-1, None]
            pts = left + 0.5 * grid.dx * (nodes[None, :] + 1.0)
            return (self(pts) * weights[None, :]).sum(axis=1) / 2.0
        for b in self.breaks:
            if not grid.x_min <= b <= grid.x_max:
                raise ConfigError(f"initial breakpoint {b!r} outside the grid window [{grid.x_min!r}, {grid.x_max!r}]")
        xl = grid.interfaces[:-1]
        xr = grid.interfaces[1:]
        lo = np.concatenate(([-np.inf], self.breaks))
        hi = np.concatenate((self.breaks, [np.inf]))
        overlap = np.maximum(0.0, np.minimum(hi[:, None], xr) - np.maximum(lo[:, None], xl))
        vals = np.asarray(self.values)[:, None]
        pieces = (overlap > 0).sum(axis=0)
        mixed = (vals * overlap).sum(axis=0) / overlap.sum(axis=0)
        # single-piece cells take the value verbatim so constant data stay exact
        pure = np.asarray(self.values)[np.argmax(overlap > 0, axis=0)]
        return np.where(pieces == 1, pure, mixed)


@dataclass(frozen=True)
class SimState:
    t: float
    rho: np.ndarray = field(repr=False)
    step_index: int


@dataclass(frozen=True)
class SolverConfig:
    grid: GridSpec
    kernel: KernelSpec
    velocity: StochasticVelocity
    initial: InitialData
    horizon: float
    noise: Optional[NoiseConfig] = None
    cfl_safety: float = 1.0
    mode: str = "sNV"
    output_times: tuple = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"sim.mode must be one of {MODES}, got {self.mode!r}")
        if not self.horizon > 0:
            raise ConfigError(f"sim.T must be positive, got {self.horizon!r}")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError(f"sim.cfl_safety must lie in (0, 1], got {self.cfl_safety!r}")
        if self.grid.x_max - self.grid.x_min < 2 * self.kernel.eta:
            raise ConfigError("grid window must be at least 2*eta wide")
        if self.grid.dx > self.kernel.eta:
            raise ConfigError(f"grid.dx={self.grid.dx!r} exceeds kernel.eta={self.kernel.eta!r}")
        if self.noise is not None and self.noise.tau != self.velocity.tau:
            raise ConfigError("noise.tau and the stochastic velocity amplitude disagree")
        if self.mode == "sNV" and self.velocity.tau > 0 and self.noise is None:
            raise ConfigError("sNV mode with tau > 0 needs a noise configuration")
        for t in self.output_times:
            if not 0 <= t <= self.horizon:
                raise ConfigError(f"sim.output_times entry {t!r} outside [0, T]")
        rho0 = self.initial.cell_averages(self.grid)
        if np.any(rho0 < 0) or np.any(rho0 > self.velocity.base.rho_max):
            raise ConfigError("initial density must lie in [0, rho_max]")

    @property
    def noise_active(self) -> bool:
        return self.mode == "sNV" and self.velocity.tau > 0

    def weights(self) -> KernelWeights:
        return kernel_weights(self.kernel, self.grid.dx)


@dataclass
class Trajectory:
    """Result of one run: snapshots at output times plus optional full history."""

    config: SolverConfig
    weights: KernelWeights
    dt: float
    step_times: np.ndarray
    output_steps: list
    states: list
    eps: np.ndarray
    noise: Optional[NoisePath]
    rho0: np.ndarray
    right_ghost: float
    inflow: np.ndarray
    outflow: np.ndarray
    rho_history: Optional[np.ndarray] = None
    v_history: Optional[np.ndarray] = None

    @property
    def dts(self) -> np.ndarray:
        return np.diff(self.step_times)

    @property
    def n_steps(self) -> int:
        return len(self.step_times) - 1

    @property
    def final(self) -> SimState:
        return self.states[-1]


def cfl_timestep(cfg: SolverConfig, weights: KernelWeights) -> float:
    """``safety * dx / (gamma_0 sup|v'| rho_max + v_max + tau)``, with ``tau -> 0`` off the sNV mode."""
    if not math.isclose(weights.dx, cfg.grid.dx, rel_tol=1e-12):
        raise ConfigError("kernel weights were built for a different dx")
    base = cfg.velocity.base
    tau = cfg.velocity.tau if cfg.mode == "sNV" else 0.0
    speed = weights.gamma0 * base.derivative_sup * base.rho_max + base.v_max + tau
    return cfg.cfl_safety * cfg.grid.dx / speed


def time_grid(horizon: float, dt: float) -> np.ndarray:
    """Step times ``n dt`` up to ``horizon``, the last step shortened to land on it."""
    n_full = int(math.floor(horizon / dt + _TIME_SLACK))
    times = np.arange(n_full + 1) * dt
    if horizon - times[-1] > _TIME_SLACK * dt:
        times = np.append(times, horizon)
    else:
        times[-1] = horizon
    if len(times) == 1:
        times = np.array([0.0, horizon])
    return times


def output_step_indices(step_times: np.ndarray, requested: Sequence[float]) -> list:
    """First step whose time is at or after each requested time."""
    slack = _TIME_SLACK * max(1.0, float(step_times[-1]))
    return [int(np.searchsorted(step_times, t - slack, side="left")) for t in requested]


def discrete_convolution(rho_extended, weights: KernelWeights, sv: StochasticVelocity, eps_n: float) -> np.ndarray:
    """``V[j] = sum_k gamma_k max{0, v(rho[j+k+1]) + eps_n}`` for every ``j`` with a full look-ahead."""
    rho_extended = np.asarray(rho_extended, dtype=float)
    n_out = rho_extended.shape[-1] - weights.n_eta
    if n_out < 1:
        raise InvariantViolation("density sequence lacks the n_eta look-ahead ghost cells")
    ve = sv.limited(rho_extended, eps_n)
    V = np.zeros(rho_extended.shape[:-1] + (n_out,))
    for k, g in enumerate(weights.gamma):
        V = V + g * ve[..., k + 1 : k + 1 + n_out]
    return V


def step(state: SimState, V, lam: float, dt: Optional[float] = None, rho_max: Optional[float] = None) -> SimState:
    """Conservative upwind update.

    ``V`` has ``n_cells + 1`` entries: the velocity entering cell 0 followed by
    the velocity at every cell's right interface.  The state time advances by
    ``dt`` when given.
    """
    rho = np.asarray(state.rho, dtype=float)
    V = np.asarray(V, dtype=float)
    if V.shape[-1] != rho.shape[-1] + 1:
        raise InvariantViolation(f"step needs {rho.shape[-1] + 1} interface velocities, got {V.shape[-1]}")
    flux = np.empty(V.shape)
    flux[..., 0] = rho[..., 0] * V[..., 0]
    flux[..., 1:] = rho * V[..., 1:]
    new = rho - lam * (flux[..., 1:] - flux[..., :-1])
    if rho_max is not None:
        _check_bounds(new, rho_max, state.step_index + 1)
    t = state.t + dt if dt is not None else state.t
    return SimState(t=t, rho=new, step_index=state.step_index + 1)


def _check_bounds(rho, rho_max, n, realizations=None):
    bad = (rho < -BOUNDS_TOL) | (rho > rho_max + BOUNDS_TOL)
    if np.any(bad):
        rows = np.nonzero(bad.reshape(-1, bad.shape[-1]).any(axis=-1))[0]
        row = int(rows[0])
        realization = None if realizations is None else int(realizations[row])
        flat = rho.reshape(-1, rho.shape[-1])[row]
        raise InvariantViolation(
            f"density left [0, {rho_max}] at step {n} (min {flat.min()!r}, max {flat.max()!r})"
            + ("" if realization is None else f" in realization {realization}"),
            realization=realization,
        )


def _velocity_fn(cfg: SolverConfig):
    sv = cfg.velocity
    if cfg.mode == "NV-expected-velocity":
        return lambda ext, eps: sv.expected(ext)
    return lambda ext, eps: sv.limited(ext, eps)


@dataclass
class _BatchResult:
    snapshots: np.ndarray  # (B, n_out, J)
    inflow: np.ndarray
    outflow: np.ndarray
    rho_history: Optional[np.ndarray]
    v_history: Optional[np.ndarray]


def integrate_batch(
    cfg: SolverConfig,
    weights: KernelWeights,
    rho0: np.ndarray,
    right_ghost: float,
    step_times: np.ndarray,
    eps: np.ndarray,
    output_steps: Sequence[int],
    record_history: bool = False,
    enforce_bounds: bool = True,
    realizations: Optional[Sequence[int]] = None,
) -> _BatchResult:
    """Advance ``B`` realizations sharing one time grid; ``eps`` has shape ``(B, n_steps)``.

    Each row is computed by the same operation sequence whatever ``B`` is, so
    results do not depend on how realizations are batched.
    """
    n_batch, n_steps = eps.shape
    n_cells = rho0.shape[0]
    n_eta = weights.n_eta
    gamma = np.ascontiguousarray(weights.gamma, dtype=float)
    vel = _velocity_fn(cfg)
    rho_max = cfg.velocity.base.rho_max
    dx = cfg.grid.dx

    rho = np.repeat(rho0[None, :], n_batch, axis=0)
    out = np.empty_like(rho)
    ext = np.empty((n_batch, n_cells + n_eta))
    ext[:, n_cells:] = right_ghost
    V = np.empty((n_batch, n_cells + 1))
    inflow = np.empty((n_batch, n_steps))
    outflow = np.empty((n_batch, n_steps))
    want = {}
    for pos, s in enumerate(output_steps):
        want.setdefault(s, []).append(pos)
    snaps = np.empty((n_batch, len(output_steps), n_cells))
    rho_hist = np.empty((n_steps + 1, n_cells)) if record_history else None
    v_hist = np.empty((n_steps, n_cells + 1)) if record_history else None

    def record(n):
        for pos in want.get(n, ()):
            snaps[:, pos, :] = rho
        if record_history:
            rho_hist[n] = rho[0]

    record(0)
    for n in range(n_steps):
        dt = step_times[n + 1] - step_times[n]
        lam = dt / dx
        ext[:, :n_cells] = rho
        ve = np.ascontiguousarray(vel(ext, eps[:, n : n + 1]))
        convolve_and_update(ve, rho, gamma, lam, out, V)
        inflow[:, n] = dt * rho[:, 0] * V[:, 0]
        outflow[:, n] = dt * rho[:, -1] * V[:, -1]
        if record_history:
            v_hist[n] = V[0]
        if enforce_bounds:
            _check_bounds(out, rho_max, n + 1, realizations)
        rho, out = out, rho
        record(n + 1)
    return _BatchResult(snaps, inflow, outflow, rho_hist, v_hist)


def check_boundaries(rho0: np.ndarray, rho: np.ndarray, n_eta: int, t: float) -> bool:
    """Warn if the outer ``n_eta`` cells on either side drifted from their initial values."""
    edge = max(1, n_eta)
    drift = max(
        float(np.max(np.abs(rho[..., :edge] - rho0[:edge]))),
        float(np.max(np.abs(rho[..., -edge:] - rho0[-edge:]))),
    )
    if drift > BOUNDARY_TOL:
        warnings.warn(
            f"solution within eta of the window edge changed by {drift:.3g} at t={t:.6g}; widen the grid window",
            BoundaryWarning,
            stacklevel=3,
        )
        return False
    return True


def resolve_dt(cfg: SolverConfig, weights: KernelWeights, dt: Optional[float]) -> float:
    if dt is None:
        return cfl_timestep(cfg, weights)
    if not dt > 0:
        raise ConfigError(f"time step must be positive, got {dt!r}")
    return float(dt)


def check_delta_r(cfg: SolverConfig, dt: float):
    if cfg.noise_active and cfg.noise.delta_r is not None and cfg.noise.delta_r < dt * (1 - 1e-12):
        raise ConfigError(f"noise.delta_r={cfg.noise.delta_r!r} is below the time step {dt!r}")


def step_noise(path: Optional[NoisePath], step_times: np.ndarray) -> np.ndarray:
    """Noise value held during each step, read at the step's start time."""
    if path is None:
        return np.zeros(len(step_times) - 1)
    starts = np.asarray(step_times[:-1], dtype=float)
    if np.any(starts < 0) or np.any(starts > path.horizon):
        raise DomainError("step times exceed the noise path horizon")
    k = np.floor(starts / path.delta_r + _TIME_SLACK).astype(np.int64)
    held = path.values[np.clip(k, 1, max(path.n_cells, 1)) - 1] if path.n_cells else np.zeros(len(k))
    return np.where(k == 0, 0.0, held)


def simulate(
    cfg: SolverConfig,
    dt: Optional[float] = None,
    noise_path: Optional[NoisePath] = None,
    record_history: bool = False,
    enforce_bounds: bool = True,
) -> Trajectory:
    """Run one realization from ``t = 0`` to ``cfg.horizon``.

    ``dt`` overrides the CFL step (used to share one time grid between runs
    and for deliberately unstable negative controls).  ``noise_path`` replaces
    the path drawn from ``cfg.noise``.
    """
    weights = cfg.weights()
    dt = resolve_dt(cfg, weights, dt)
    check_delta_r(cfg, dt)
    times = time_grid(cfg.horizon, dt)
    requested = list(cfg.output_times) or [cfg.horizon]
    out_steps = output_step_indices(times, requested)

    path = None
    if cfg.noise_active:
        path = noise_path
        if path is None:
            path = sample_noise_path(cfg.noise, cfg.horizon, delta_r=cfg.noise.delta_r or dt)
        elif abs(path.tau - cfg.velocity.tau) > 0:
            raise ConfigError("supplied noise path amplitude differs from the configured tau")
    eps = step_noise(path, times)

    rho0 = cfg.initial.cell_averages(cfg.grid)
    right_ghost = float(rho0[-1])
    res = integrate_batch(
        cfg, weights, rho0, right_ghost, times, eps[None, :], out_steps,
        record_history=record_history, enforce_bounds=enforce_bounds,
    )
    states = [
        SimState(t=float(times[s]), rho=res.snapshots[0, pos], step_index=s)
        for pos, s in enumerate(out_steps)
    ]
    for st in states:
        check_boundaries(rho0, st.rho, weights.n_eta, st.t)
    return Trajectory(
        config=cfg, weights=weights, dt=dt, step_times=times, output_steps=out_steps,
        states=states, eps=eps, noise=path, rho0=rho0, right_ghost=right_ghost,
        inflow=res.inflow[0], outflow=res.outflow[0],
        rho_history=res.rho_history, v_history=res.v_history,
    )


def initial_cell_averages(data: InitialData, grid: GridSpec) -> SimState:
    return SimState(t=0.0, rho=data.cell_averages(grid), step_index=0)
