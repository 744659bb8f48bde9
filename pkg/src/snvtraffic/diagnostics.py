"""Runtime checks of the discrete properties of the scheme.

All checks read a :class:`~snvtraffic.solver.Trajectory` recorded with
``record_history=True`` and never modify it.  Norms and total variations are
taken over the computational window; constant far fields make that exact
while the boundary warning stays silent.

The entropy check uses ``a ^ b := max{a, b}`` and ``a v b := min{a, b}`` when
forming ``H(u) = F(u ^ c) - F(u v c)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvariantViolation
from .kernel import KernelSpec
from .solver import SolverConfig, Trajectory
from .velocity import StochasticVelocity

MAX_PRINCIPLE_TOL = 1e-12
MASS_TOL = 1e-10
ENTROPY_TOL = 1e-12


def _require_history(traj: Trajectory):
    if traj.rho_history is None or traj.v_history is None:
        raise InvariantViolation("diagnostics need a trajectory simulated with record_history=True")


def check_max_principle(traj: Trajectory, tol: float = MAX_PRINCIPLE_TOL):
    """Return ``(ok, worst_excess)`` of all states against ``[min rho^0, max rho^0]``."""
    hist = traj.rho_history if traj.rho_history is not None else np.array([s.rho for s in traj.states])
    if not np.all(np.isfinite(hist)):
        return False, math.inf
    lo, hi = float(traj.rho0.min()), float(traj.rho0.max())
    excess = max(0.0, float(hist.max()) - hi, lo - float(hist.min()))
    return excess <= tol, excess


def mass_history(traj: Trajectory, corrected: bool = True) -> np.ndarray:
    """Window mass per step, with the net boundary outflow added back unless ``corrected`` is false."""
    _require_history(traj)
    mass = traj.config.grid.dx * traj.rho_history.sum(axis=1)
    if not corrected:
        return mass
    return mass + np.concatenate(([0.0], np.cumsum(traj.outflow - traj.inflow)))


def check_mass(traj: Trajectory, corrected: bool = True) -> float:
    """Largest relative drift of the window mass from its initial value.

    Uncorrected drift is zero only while the far fields stay constant and
    balanced, so it exposes waves reaching the window edges.
    """
    m = mass_history(traj, corrected)
    if not np.all(np.isfinite(m)):
        return math.inf
    return float(np.max(np.abs(m - m[0])) / abs(m[0]))


def tv_space(rho, right_ghost: Optional[float] = None) -> float:
    """Total variation of a cell sequence, extended by the right ghost value if given."""
    rho = np.asarray(rho, dtype=float)
    if right_ghost is not None:
        rho = np.append(rho, right_ghost)
    return float(np.abs(np.diff(rho)).sum())


def _norms(cfg: SolverConfig):
    base = cfg.velocity.base
    tau = cfg.velocity.tau if cfg.mode == "sNV" else 0.0
    return base.v_max + tau, base.derivative_sup


def tv_constant(cfg: SolverConfig, which: str, rho_sup: float) -> float:
    w0 = cfg.kernel.w0
    v_norm, dv_norm = _norms(cfg)
    if which == "eps-dependent":
        return w0 * (v_norm + dv_norm) * rho_sup
    if which == "eps-independent":
        return 2.0 * w0 * dv_norm * rho_sup
    raise ValueError(f"unknown bound {which!r}")


def tv_space_bound(cfg: SolverConfig, T: float, which: str = "eps-dependent", rho0=None) -> float:
    """``exp(T C) TV(rho_0)`` with the noise-dependent or noise-free growth constant."""
    if rho0 is None:
        rho0 = cfg.initial.cell_averages(cfg.grid)
    tv0 = tv_space(rho0, rho0[-1])
    return _exp_times(T * tv_constant(cfg, which, float(np.max(rho0))), tv0)


def _exp_times(exponent: float, factor: float) -> float:
    if factor == 0.0:
        return 0.0
    try:
        return math.exp(exponent) * factor
    except OverflowError:
        return math.inf


def tv_space_time(traj: Trajectory):
    """Space-time variation, its bound and the worst per-step ratio to the step bound.

    Returns ``(value, bound, step_ok, worst_step_ratio)``.
    """
    _require_history(traj)
    cfg = traj.config
    hist = traj.rho_history
    dts = traj.dts
    dx = cfg.grid.dx
    T = float(traj.step_times[-1])
    ghost = traj.right_ghost
    tv_n = np.array([tv_space(r, ghost) for r in hist[:-1]])
    time_part = np.abs(np.diff(hist, axis=0)).sum(axis=1) * dx
    value = float((dts * tv_n).sum() + time_part.sum())

    rho0 = traj.rho0
    tv0 = tv_space(rho0, ghost)
    rho_sup = float(rho0.max())
    v_norm, dv_norm = _norms(cfg)
    growth = _exp_times(T * tv_constant(cfg, "eps-dependent", rho_sup), tv0)
    bound = T * growth * (1.0 + cfg.kernel.w0 * dv_norm * rho_sup + v_norm)
    k_eps = growth * (cfg.kernel.w0 * dv_norm * rho_sup + v_norm)
    step_bound = dts * k_eps
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(step_bound > 0, time_part / step_bound, np.where(time_part > 0, np.inf, 0.0))
    worst = float(ratio.max()) if ratio.size else 0.0
    return value, bound, worst <= 1.0, worst


def default_c_grid(cfg: SolverConfig, n: int = 9) -> np.ndarray:
    base = np.linspace(0.0, cfg.velocity.base.rho_max, n)
    return np.unique(np.concatenate((base, cfg.initial.distinct_values())))


def entropy_residuals(traj: Trajectory, c_grid: Sequence[float]) -> np.ndarray:
    """Worst residual of the discrete entropy inequality for every ``c`` (positive means violated)."""
    _require_history(traj)
    hist = traj.rho_history
    V = traj.v_history
    if V.shape[0] != hist.shape[0] - 1 or V.shape[1] != hist.shape[1] + 1:
        raise InvariantViolation("velocity history does not match the density history")
    lam = (traj.dts / traj.config.grid.dx)[:, None]
    now, nxt = hist[:-1], hist[1:]
    upwind = np.concatenate((now[:, :1], now[:, :-1]), axis=1)
    v_right, v_left = V[:, 1:], V[:, :-1]
    worst = []
    if not (np.all(np.isfinite(hist)) and np.all(np.isfinite(V))):
        return np.full(len(c_grid), math.inf)
    for c in c_grid:
        def H(u, vel):
            return vel * np.maximum(u, c) - vel * np.minimum(u, c)

        R = (
            np.abs(nxt - c)
            - np.abs(now - c)
            + lam * (H(now, v_right) - H(upwind, v_left))
            + lam * np.sign(nxt - c) * (v_right * c - v_left * c)
        )
        worst.append(float(R.max()))
    return np.array(worst)


def entropy_residual(traj: Trajectory, c_grid: Optional[Sequence[float]] = None) -> float:
    if c_grid is None:
        c_grid = default_c_grid(traj.config)
    return float(entropy_residuals(traj, c_grid).max())


def velocity_difference_check(traj: Trajectory):
    """Compare the largest jump of the convolved velocity between neighbouring interfaces with two bounds.

    Returns ``(observed, gamma0_bound, dx_eta_bound)``.  ``gamma0_bound`` is
    ``gamma_0 (v_max + tau)``, which summation by parts guarantees for any
    data.  ``dx_eta_bound`` is ``dx W(0) eta (v_max + tau) rho_max``; it is
    tighter than the first whenever ``eta rho_max < 1`` and can fail for
    discontinuous data, so it is reported but not enforced.
    """
    _require_history(traj)
    cfg = traj.config
    v_norm, _ = _norms(cfg)
    observed = float(np.abs(np.diff(traj.v_history, axis=1)).max())
    gamma0_bound = traj.weights.gamma0 * v_norm
    dx_eta_bound = cfg.grid.dx * cfg.kernel.w0 * cfg.kernel.eta * v_norm * cfg.velocity.base.rho_max
    return observed, gamma0_bound, dx_eta_bound


def realized_derivative_norm(sv: StochasticVelocity, eps_values, samples: int = 2001) -> float:
    """``sup_t sup_rho |v'(rho)| 1{v(rho) + eps(t) > 0}`` over the noise values actually used."""
    rho = np.linspace(0.0, sv.base.rho_max, samples)
    v = sv.base(rho)
    dv = np.abs(sv.base.derivative(rho))
    best = 0.0
    for e in np.unique(np.asarray(eps_values, dtype=float)):
        mask = v + e > 0
        if mask.any():
            best = max(best, float(dv[mask].max()))
    return best


def stability_constant(traj: Trajectory, kernel: Optional[KernelSpec] = None, sv: Optional[StochasticVelocity] = None):
    """L1-stability rate from the observed norms: returns ``(K_eps, K)``.

    ``K_eps`` uses the realized derivative norm of the limited velocity,
    ``K`` the deterministic ``sup |v'|``.
    """
    _require_history(traj)
    kernel = kernel or traj.config.kernel
    sv = sv or traj.config.velocity
    dx = traj.config.grid.dx
    hist = traj.rho_history
    sup_tv = max(tv_space(r, traj.right_ghost) for r in hist)
    sup_l1 = float((dx * np.abs(hist).sum(axis=1)).max())
    shape = kernel.w0 * (sup_tv + 2.0 * sup_l1) + kernel.derivative_sup * sup_l1
    if traj.config.mode == "NV-expected-velocity":
        # mean velocity has |d/drho| <= |v'| everywhere
        dv_eps = sv.base.derivative_sup
    else:
        dv_eps = realized_derivative_norm(sv, traj.eps)
    return dv_eps * shape, sv.base.derivative_sup * shape


def l1_distance(a, b, dx: float) -> float:
    return float(dx * np.abs(np.asarray(a) - np.asarray(b)).sum())


def perturbation_growth(traj_a: Trajectory, traj_b: Trajectory):
    """L1 distance between two histories on the same grid and time mesh, per step."""
    _require_history(traj_a)
    _require_history(traj_b)
    dx = traj_a.config.grid.dx
    return dx * np.abs(traj_a.rho_history - traj_b.rho_history).sum(axis=1)


@dataclass
class DiagnosticsReport:
    max_principle_ok: bool
    max_principle_excess: float
    mass_drift: float
    mass_ok: bool
    tv_space: list = field(repr=False)
    tv_initial: float = 0.0
    tv_bounds: dict = field(default_factory=dict)
    tv_ok: bool = True
    tv_space_time: float = 0.0
    tv_space_time_bound: float = 0.0
    tv_space_time_step_ok: bool = True
    tv_space_time_worst_step_ratio: float = 0.0
    tv_space_time_ok: bool = True
    entropy_c_grid: list = field(default_factory=list)
    entropy_residuals: list = field(default_factory=list)
    entropy_ok: bool = True
    velocity_difference: dict = field(default_factory=dict)
    velocity_difference_ok: bool = True
    stability_constant: float = 0.0
    stability_cap: float = 0.0
    stability_ok: bool = True
    velocity_derivative_bound: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.flags().values())

    def flags(self) -> dict:
        return {
            "max_principle": self.max_principle_ok,
            "mass": self.mass_ok,
            "tv_space": self.tv_ok,
            "tv_space_time": self.tv_space_time_ok and self.tv_space_time_step_ok,
            "entropy": self.entropy_ok,
            "velocity_difference": self.velocity_difference_ok,
            "stability": self.stability_ok,
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags"] = self.flags()
        d["passed"] = self.passed
        return d


def diagnose(traj: Trajectory, c_grid: Optional[Sequence[float]] = None) -> DiagnosticsReport:
    """Run every check on one recorded trajectory."""
    _require_history(traj)
    with np.errstate(over="ignore", invalid="ignore"):
        return _diagnose(traj, c_grid)


def _diagnose(traj: Trajectory, c_grid) -> DiagnosticsReport:
    cfg = traj.config
    T = float(traj.step_times[-1])
    mp_ok, excess = check_max_principle(traj)
    drift = check_mass(traj)
    tvs = [tv_space(r, traj.right_ghost) for r in traj.rho_history]
    bounds = {
        "eps-dependent": tv_space_bound(cfg, T, "eps-dependent", traj.rho0),
        "eps-independent": tv_space_bound(cfg, T, "eps-independent", traj.rho0),
    }
    tv_final = tvs[-1]
    st_value, st_bound, st_step_ok, st_ratio = tv_space_time(traj)
    grid_c = default_c_grid(cfg) if c_grid is None else np.asarray(c_grid, dtype=float)
    residuals = entropy_residuals(traj, grid_c)
    observed, g_bound, dx_bound = velocity_difference_check(traj)
    k_eps, k_cap = stability_constant(traj)
    kernel = cfg.kernel
    v_norm, _ = _norms(cfg)
    return DiagnosticsReport(
        max_principle_ok=mp_ok,
        max_principle_excess=excess,
        mass_drift=drift,
        mass_ok=drift <= MASS_TOL,
        tv_space=tvs,
        tv_initial=tvs[0],
        tv_bounds=bounds,
        tv_ok=all(tv_final <= b for b in bounds.values()),
        tv_space_time=st_value,
        tv_space_time_bound=st_bound,
        tv_space_time_step_ok=st_step_ok,
        tv_space_time_worst_step_ratio=st_ratio,
        tv_space_time_ok=st_value <= st_bound,
        entropy_c_grid=[float(c) for c in grid_c],
        entropy_residuals=[float(r) for r in residuals],
        entropy_ok=bool(residuals.max() <= ENTROPY_TOL),
        velocity_difference={"observed": observed, "gamma0_bound": g_bound, "dx_eta_bound": dx_bound},
        velocity_difference_ok=observed <= g_bound * (1 + 1e-12),
        stability_constant=k_eps,
        stability_cap=k_cap,
        stability_ok=k_eps <= k_cap,
        velocity_derivative_bound=kernel.derivative_sup * v_norm * kernel.eta + 2.0 * v_norm * kernel.w0,
    )
