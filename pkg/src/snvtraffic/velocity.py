"""Velocity laws, the noise limiter ``max{0, v + eps}`` and its moments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, DomainError

FAMILIES = ("linear", "quadratic", "custom")

_RHO_SLACK = 1e-12


@dataclass(frozen=True)
class VelocityModel:
    """Non-increasing velocity law ``v`` on ``[0, rho_max]`` with ``v(0) = v_max``.

    Use :meth:`custom` for laws other than the built-in linear and quadratic ones.
    """

    family: str = "linear"
    v_max: float = 1.0
    rho_max: float = 1.0
    _func: Optional[Callable] = field(default=None, repr=False, compare=False)
    _deriv: Optional[Callable] = field(default=None, repr=False, compare=False)
    _deriv_sup: Optional[float] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"velocity.family must be one of {FAMILIES}, got {self.family!r}")
        if not (self.v_max > 0 and math.isfinite(self.v_max)):
            raise ConfigError(f"velocity.v_max must be positive, got {self.v_max!r}")
        if not (self.rho_max > 0 and math.isfinite(self.rho_max)):
            raise ConfigError(f"velocity.rho_max must be positive, got {self.rho_max!r}")
        if self.family == "custom" and (self._func is None or self._deriv is None or self._deriv_sup is None):
            raise ConfigError("custom velocity needs v, v' and sup|v'|")

    @classmethod
    def custom(cls, v, dv, derivative_sup, v_max, rho_max, samples=4001):
        """Wrap user callables after checking the admissibility conditions on a dense grid."""
        model = cls("custom", float(v_max), float(rho_max), v, dv, float(derivative_sup))
        rho = np.linspace(0.0, rho_max, samples)
        vals = np.asarray(v(rho), dtype=float)
        ders = np.asarray(dv(rho), dtype=float)
        if not math.isclose(vals[0], v_max, rel_tol=1e-12, abs_tol=1e-12):
            raise ConfigError(f"custom velocity: v(0)={vals[0]!r} differs from v_max={v_max!r}")
        if np.any(vals < 0):
            raise ConfigError("custom velocity must be non-negative on [0, rho_max]")
        if np.any(np.diff(vals) > 1e-12) or np.any(ders > 1e-12):
            raise ConfigError("custom velocity must be non-increasing on [0, rho_max]")
        if np.max(np.abs(ders)) > derivative_sup * (1 + 1e-9):
            raise ConfigError("custom velocity: sampled |v'| exceeds the declared supremum")
        return model

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.family == "linear":
            return self.v_max * (1.0 - rho / self.rho_max)
        if self.family == "quadratic":
            r = rho / self.rho_max
            return self.v_max * (1.0 - r * r)
        return np.asarray(self._func(rho), dtype=float)

    def derivative(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.family == "linear":
            return np.full_like(rho, -self.v_max / self.rho_max)
        if self.family == "quadratic":
            return -2.0 * self.v_max * rho / self.rho_max**2
        return np.asarray(self._deriv(rho), dtype=float)

    @property
    def derivative_sup(self) -> float:
        """Closed-form ``sup |v'|``."""
        if self.family == "linear":
            return self.v_max / self.rho_max
        if self.family == "quadratic":
            return 2.0 * self.v_max / self.rho_max
        return self._deriv_sup

    def inverse(self, speed: float) -> float:
        """Density at which ``v`` equals ``speed``, clipped to ``[0, rho_max]``."""
        v_end = float(self(self.rho_max))
        if speed >= self.v_max:
            return 0.0
        if speed <= v_end:
            return self.rho_max
        if self.family == "linear":
            return self.rho_max * (1.0 - speed / self.v_max)
        if self.family == "quadratic":
            return self.rho_max * math.sqrt(1.0 - speed / self.v_max)
        return brentq(lambda r: float(self(r)) - speed, 0.0, self.rho_max, xtol=1e-14)


@dataclass(frozen=True)
class StochasticVelocity:
    """Base velocity law perturbed by bounded noise of amplitude ``tau < v_max``."""

    base: VelocityModel
    tau: float = 0.0

    def __post_init__(self):
        if not (self.tau >= 0 and math.isfinite(self.tau)):
            raise ConfigError(f"noise.tau must be non-negative, got {self.tau!r}")
        if not self.tau < self.base.v_max:
            raise ConfigError("noise.tau: tau must be strictly less than v_max")

    @property
    def norm_bound(self) -> float:
        """Deterministic cap ``v_max + tau`` on the limited velocity."""
        return self.base.v_max + self.tau

    @property
    def derivative_norm_bound(self) -> float:
        return self.base.derivative_sup

    def limited(self, rho, eps):
        """Unchecked vectorised ``max{0, v(rho) + eps}``."""
        return np.maximum(0.0, self.base(rho) + eps)

    def limited_derivative(self, rho, eps):
        return np.where(self.base(rho) + eps > 0.0, self.base.derivative(rho), 0.0)

    def expected(self, rho):
        """Mean of the limited velocity over ``eps ~ U(-tau, tau)``."""
        v = self.base(rho)
        if self.tau == 0.0:
            return v
        tau = self.tau
        gap = np.maximum(tau - v, 0.0)
        # (tau + v)^2 / (4 tau) written as v plus a non-negative lift, so the
        # ordering E >= v survives rounding; the lift vanishes once v >= tau.
        return v + gap * gap / (4.0 * tau)

    def variance(self, rho):
        """Variance of the limited velocity over ``eps ~ U(-tau, tau)``."""
        v = self.base(rho)
        if self.tau == 0.0:
            return np.zeros_like(v)
        tau = self.tau
        s = tau + v
        active = s**3 * (8.0 * tau - 3.0 * s) / (48.0 * tau * tau)
        return np.where(v >= tau, tau * tau / 3.0, active)

    def activation_density(self) -> float:
        """``v^{-1}(tau)``: above this density the limiter can become active."""
        return self.base.inverse(self.tau)


def _check_rho(sv: StochasticVelocity, rho):
    arr = np.asarray(rho, dtype=float)
    if np.any(arr < -_RHO_SLACK) or np.any(arr > sv.base.rho_max + _RHO_SLACK) or np.any(np.isnan(arr)):
        raise DomainError(f"density outside [0, {sv.base.rho_max!r}]")


def _check_eps(sv: StochasticVelocity, eps):
    if np.any(np.abs(np.asarray(eps, dtype=float)) > sv.tau + 1e-15):
        raise DomainError(f"noise value outside [-{sv.tau!r}, {sv.tau!r}]")


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def limited_velocity(sv: StochasticVelocity, rho, eps):
    _check_rho(sv, rho)
    _check_eps(sv, eps)
    return _scalar(sv.limited(rho, eps))


def limited_velocity_derivative(sv: StochasticVelocity, rho, eps):
    """``v'(rho)`` where ``v(rho) + eps > 0``, otherwise 0 (also at the kink itself)."""
    _check_rho(sv, rho)
    _check_eps(sv, eps)
    return _scalar(sv.limited_derivative(rho, eps))


def expected_velocity(sv: StochasticVelocity, rho):
    _check_rho(sv, rho)
    return _scalar(sv.expected(rho))


def velocity_variance(sv: StochasticVelocity, rho):
    _check_rho(sv, rho)
    return _scalar(sv.variance(rho))
