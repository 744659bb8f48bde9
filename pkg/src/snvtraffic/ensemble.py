"""Monte Carlo ensembles of noise realizations and their pointwise statistics."""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .noise import sample_noise_path
from .solver import (
    SolverConfig,
    check_boundaries,
    check_delta_r,
    cfl_timestep,
    integrate_batch,
    output_step_indices,
    simulate,
    step_noise,
    time_grid,
)
from .velocity import StochasticVelocity

REFERENCES = ("NV", "NV-expected-velocity", "none")


@dataclass(frozen=True)
class EnsembleConfig:
    base: SolverConfig
    n_realizations: int
    quantiles: tuple = (0.05, 0.95)
    reference: str = "NV"
    threads: int = 1
    batch_size: int = 32
    keep_samples: bool = False

    def __post_init__(self):
        if self.base.mode != "sNV":
            raise ConfigError(f"ensemble base mode must be sNV, got {self.base.mode!r}")
        if int(self.n_realizations) < 1:
            raise ConfigError("ensemble.n_realizations must be at least 1")
        if any(not 0.0 < q < 1.0 for q in self.quantiles):
            raise ConfigError("ensemble.quantiles must lie strictly inside (0, 1)")
        if self.reference not in REFERENCES:
            raise ConfigError(f"ensemble.reference must be one of {REFERENCES}, got {self.reference!r}")
        if int(self.threads) < 1 or int(self.batch_size) < 1:
            raise ConfigError("threads and batch_size must be positive")


@dataclass
class EnsembleStats:
    times: list
    x: np.ndarray = field(repr=False)
    dt: float = 0.0
    n_realizations: int = 0
    mean: np.ndarray = field(default=None, repr=False)  # (n_times, J)
    variance: Optional[np.ndarray] = field(default=None, repr=False)  # None when N = 1
    quantiles: dict = field(default_factory=dict, repr=False)
    minimum: np.ndarray = field(default=None, repr=False)
    maximum: np.ndarray = field(default=None, repr=False)
    reference: Optional[np.ndarray] = field(default=None, repr=False)
    reference_mode: str = "none"
    distances: list = field(default_factory=list)
    samples: Optional[np.ndarray] = field(default=None, repr=False)  # (N, n_times, J)


def distance_metrics(mean, reference, dx: float) -> dict:
    """L1, L2 and Linf distances with and without the ``dx`` factor.

    ``L2`` is the plain sum of squares (``dx``-weighted in the scaled form),
    no square root taken.
    """
    a = np.asarray(mean, dtype=float)
    b = np.asarray(reference, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"length mismatch: {a.shape} vs {b.shape}")
    d = a - b
    l1 = float(np.abs(d).sum())
    l2 = float((d * d).sum())
    linf = float(np.abs(d).max()) if d.size else 0.0
    return {
        "scaled": {"L1": dx * l1, "L2": dx * l2, "Linf": linf},
        "unscaled": {"L1": l1, "L2": l2, "Linf": linf},
    }


def moment_overlay(sv: StochasticVelocity, rho_grid) -> dict:
    """Closed-form moment curves of the limited velocity on a density grid."""
    rho = np.asarray(rho_grid, dtype=float)
    v = sv.base(rho)
    return {
        "rho": rho,
        "v": v,
        "mean": sv.expected(rho),
        "variance": sv.variance(rho),
        "lower": np.maximum(0.0, v - sv.tau),
        "upper": np.maximum(0.0, v + sv.tau),
        "rho_star": sv.activation_density(),
    }


def realization_noise(cfg: SolverConfig, index: int, step_times: np.ndarray, dt: float) -> np.ndarray:
    """Per-step noise of realization ``index`` on a shared time grid."""
    if not cfg.noise_active:
        return np.zeros(len(step_times) - 1)
    noise = replace(cfg.noise, realization_index=int(index))
    path = sample_noise_path(noise, cfg.horizon, delta_r=noise.delta_r or dt)
    return step_noise(path, step_times)


def _summarize(samples: np.ndarray, quantiles: Sequence[float]):
    # realization axis last and contiguous: numpy then sums it pairwise
    cube = np.ascontiguousarray(np.moveaxis(samples, 0, -1))
    n = cube.shape[-1]
    lo, hi = cube.min(axis=-1), cube.max(axis=-1)
    # offset by the first sample so identical realizations reproduce it exactly
    shift = cube[..., :1]
    mean = np.clip(shift[..., 0] + (cube - shift).sum(axis=-1) / n, lo, hi)
    variance = None
    if n > 1:
        dev = cube - mean[..., None]
        variance = (dev * dev).sum(axis=-1) / (n - 1)
    qs = {float(q): np.quantile(cube, q, axis=-1, method="linear") for q in quantiles}
    return mean, variance, qs, lo, hi


def run_ensemble(cfg: EnsembleConfig) -> EnsembleStats:
    """Simulate ``N`` realizations on one shared time grid and aggregate them.

    Realization ``i`` always uses noise stream ``(master_seed, i)`` and is
    integrated independently of its batch neighbours, so the statistics do
    not depend on ``threads`` or ``batch_size``.
    """
    base = cfg.base
    weights = base.weights()
    dt = cfl_timestep(base, weights)
    check_delta_r(base, dt)
    times = time_grid(base.horizon, dt)
    requested = list(base.output_times) or [base.horizon]
    out_steps = output_step_indices(times, requested)
    rho0 = base.initial.cell_averages(base.grid)
    right_ghost = float(rho0[-1])
    n = int(cfg.n_realizations)
    samples = np.empty((n, len(out_steps), base.grid.n_cells))

    def run(lo):
        idx = np.arange(lo, min(lo + cfg.batch_size, n))
        eps = np.stack([realization_noise(base, i, times, dt) for i in idx])
        res = integrate_batch(base, weights, rho0, right_ghost, times, eps, out_steps, realizations=idx)
        samples[idx] = res.snapshots

    starts = range(0, n, int(cfg.batch_size))
    if cfg.threads == 1:
        for lo in starts:
            run(lo)
    else:
        with ThreadPoolExecutor(max_workers=int(cfg.threads)) as pool:
            list(pool.map(run, starts))

    for pos, s in enumerate(out_steps):
        check_boundaries(rho0, samples[:, pos], weights.n_eta, float(times[s]))

    mean, variance, qs, lo, hi = _summarize(samples, cfg.quantiles)
    reference = None
    distances = []
    if cfg.reference != "none":
        ref_cfg = replace(base, mode=cfg.reference)
        ref = simulate(ref_cfg, dt=dt)
        reference = np.stack([st.rho for st in ref.states])
        distances = [distance_metrics(mean[k], reference[k], base.grid.dx) for k in range(len(out_steps))]
    return EnsembleStats(
        times=[float(times[s]) for s in out_steps],
        x=base.grid.centers,
        dt=dt,
        n_realizations=n,
        mean=mean,
        variance=variance,
        quantiles=qs,
        minimum=lo,
        maximum=hi,
        reference=reference,
        reference_mode=cfg.reference,
        distances=distances,
        samples=samples if cfg.keep_samples else None,
    )


def stats_digest(stats: EnsembleStats) -> str:
    """SHA-256 over the raw bytes of every statistic, for reproducibility checks."""
    h = hashlib.sha256()
    parts = [stats.mean, stats.minimum, stats.maximum]
    if stats.variance is not None:
        parts.append(stats.variance)
    parts += [stats.quantiles[q] for q in sorted(stats.quantiles)]
    if stats.reference is not None:
        parts.append(stats.reference)
    for p in parts:
        h.update(np.ascontiguousarray(p).tobytes())
    return h.hexdigest()
