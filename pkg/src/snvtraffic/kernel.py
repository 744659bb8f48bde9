"""Nonlocal look-ahead kernels and their exact cell weights."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError

FAMILIES = ("concave", "constant", "linear-decreasing")

# Guards floor(eta/dx) against representation error, e.g. 0.3/0.1 = 2.9999999999999996.
_FLOOR_SLACK = 1e-9


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family on ``[0, eta]``, normalised to unit mass.

    * ``concave``: ``3 (eta^2 - x^2) / (2 eta^3)``
    * ``constant``: ``1 / eta``
    * ``linear-decreasing``: ``2 (eta - x) / eta^2``
    """

    eta: float
    family: str = "concave"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"kernel.family must be one of {FAMILIES}, got {self.family!r}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ConfigError(f"kernel.eta must be a positive finite number, got {self.eta!r}")

    def value(self, x):
        """Vectorised kernel evaluation without domain checks."""
        eta = self.eta
        x = np.asarray(x, dtype=float)
        if self.family == "concave":
            return 3.0 * (eta * eta - x * x) / (2.0 * eta**3)
        if self.family == "constant":
            return np.full_like(x, 1.0 / eta)
        return 2.0 * (eta - x) / (eta * eta)

    def mass(self, a, b):
        """Exact integral of the kernel over ``[a, b]`` (closed form, factored for accuracy)."""
        eta = self.eta
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        h = b - a
        if self.family == "concave":
            return h * (3.0 * eta * eta - (a * a + a * b + b * b)) / (2.0 * eta**3)
        if self.family == "constant":
            return h / eta
        return h * (2.0 * eta - (a + b)) / (eta * eta)

    @property
    def w0(self) -> float:
        """Kernel value at the origin, its supremum."""
        return float(self.value(0.0))

    @property
    def derivative_sup(self) -> float:
        """``sup |W'|`` on ``[0, eta]``."""
        if self.family == "concave":
            return 3.0 / self.eta**2
        if self.family == "constant":
            return 0.0
        return 2.0 / self.eta**2


@dataclass(frozen=True)
class KernelWeights:
    gamma: np.ndarray = field(repr=False)
    n_eta: int
    dx: float

    @property
    def gamma0(self) -> float:
        return float(self.gamma[0])

    @property
    def total(self) -> float:
        return float(self.gamma.sum())


def kernel_value(spec: KernelSpec, x: float) -> float:
    """Evaluate ``W_eta(x)`` for ``x`` in ``[0, eta]``."""
    if not 0.0 <= x <= spec.eta:
        raise DomainError(f"kernel argument {x!r} outside [0, {spec.eta!r}]")
    return float(spec.value(x))


def n_look_ahead(eta: float, dx: float) -> int:
    """Number of whole cells inside the look-ahead window, ``floor(eta/dx)``."""
    return int(math.floor(eta / dx + _FLOOR_SLACK))


def kernel_weights(spec: KernelSpec, dx: float) -> KernelWeights:
    """Integrate the kernel exactly over ``[k dx, (k+1) dx]`` for ``k < floor(eta/dx)``.

    A remainder interval ``[N dx, eta]`` is dropped, so the weights sum to
    less than one unless ``dx`` divides ``eta``.
    """
    if not dx > 0:
        raise ConfigError(f"grid.dx must be positive, got {dx!r}")
    n = n_look_ahead(spec.eta, dx)
    if n < 1:
        raise ConfigError(f"grid.dx={dx!r} exceeds kernel.eta={spec.eta!r}: no cell fits in the look-ahead window")
    k = np.arange(n, dtype=float)
    lo = k * dx
    hi = np.minimum((k + 1.0) * dx, spec.eta)
    gamma = np.maximum(spec.mass(lo, hi), 0.0)
    gamma.setflags(write=False)
    return KernelWeights(gamma=gamma, n_eta=n, dx=float(dx))
