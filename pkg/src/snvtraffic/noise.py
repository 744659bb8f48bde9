"""Piecewise-constant bounded noise paths.

Every realization owns an independent PCG64 stream keyed by
``SeedSequence(master_seed, spawn_key=(realization_index,))``.  A path with
``R_T`` cells consumes the first ``R_T`` doubles of that stream through
``Generator.uniform(-tau, tau)``, so ensemble members can be generated in any
order and on any worker with identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError

_INDEX_SLACK = 1e-9


@dataclass(frozen=True)
class NoiseConfig:
    tau: float = 0.0
    delta_r: Optional[float] = None  # None: one noise cell per solver time step
    master_seed: int = 0
    realization_index: int = 0

    def __post_init__(self):
        if not (self.tau >= 0 and math.isfinite(self.tau)):
            raise ConfigError(f"noise.tau must be non-negative, got {self.tau!r}")
        if self.delta_r is not None and not self.delta_r > 0:
            raise ConfigError(f"noise.delta_r must be positive, got {self.delta_r!r}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError(f"noise.seed must be an unsigned 64-bit integer, got {self.master_seed!r}")
        if int(self.realization_index) < 0:
            raise ConfigError("realization index must be non-negative")


@dataclass(frozen=True)
class NoisePath:
    """Values ``eps^1 .. eps^{R_T}``; ``eps(t) = eps^k`` on ``[k delta_r, (k+1) delta_r)``, 0 before ``delta_r``."""

    values: np.ndarray = field(repr=False)
    delta_r: float
    horizon: float
    tau: float

    @property
    def n_cells(self) -> int:
        return int(self.values.shape[0])

    def index(self, t: float) -> int:
        return int(math.floor(t / self.delta_r + _INDEX_SLACK))

    def at(self, t: float) -> float:
        return noise_at(self, t)

    def total_variation(self) -> float:
        padded = np.concatenate(([0.0], self.values))
        return float(np.abs(np.diff(padded)).sum())


def realization_rng(master_seed: int, realization_index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(realization_index),))
    return np.random.Generator(np.random.PCG64(seq))


def n_noise_cells(horizon: float, delta_r: float) -> int:
    return int(math.floor(horizon / delta_r + _INDEX_SLACK))


def sample_noise_path(cfg: NoiseConfig, horizon: float, delta_r: Optional[float] = None) -> NoisePath:
    """Draw one path on ``[0, horizon]``.

    ``delta_r`` overrides ``cfg.delta_r``; one of the two must be set.
    """
    if not horizon > 0:
        raise DomainError(f"noise horizon must be positive, got {horizon!r}")
    dr = cfg.delta_r if delta_r is None else delta_r
    if dr is None or not dr > 0:
        raise ConfigError("noise.delta_r is unresolved; pass the solver time step")
    r_t = n_noise_cells(horizon, dr)
    if cfg.tau == 0.0:
        values = np.zeros(r_t)
    else:
        values = realization_rng(cfg.master_seed, cfg.realization_index).uniform(-cfg.tau, cfg.tau, r_t)
    values.setflags(write=False)
    return NoisePath(values=values, delta_r=float(dr), horizon=float(horizon), tau=float(cfg.tau))


def noise_at(path: NoisePath, t: float) -> float:
    if not 0.0 <= t <= path.horizon:
        raise DomainError(f"time {t!r} outside [0, {path.horizon!r}]")
    k = path.index(t)
    if k == 0:
        return 0.0
    # t = T may land one cell past the last stored value when delta_r divides T.
    return float(path.values[min(k, path.n_cells) - 1])
