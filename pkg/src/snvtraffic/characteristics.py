"""Vehicle paths traced through a recorded convolved-velocity field by explicit Euler."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, InvariantViolation
from .solver import Trajectory


@dataclass(frozen=True)
class CharacteristicTrace:
    x0: float
    t0: float
    samples: np.ndarray = field(repr=False)  # (n, 2) rows of (t, x)
    clipped: bool = False
    error: Optional[str] = None

    @property
    def times(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def positions(self) -> np.ndarray:
        return self.samples[:, 1]

    @property
    def ok(self) -> bool:
        return self.error is None


def _start_step(step_times: np.ndarray, t0: float) -> int:
    slack = 1e-9 * max(1.0, float(step_times[-1]))
    n = int(np.searchsorted(step_times, t0 - slack, side="left"))
    if n >= len(step_times) or abs(step_times[n] - t0) > slack:
        raise DomainError(f"start time {t0!r} is not on the solver time grid")
    return n


def velocity_at(V_row: np.ndarray, x, x_min: float, dx: float, interpolate: bool = False):
    """Convolved velocity at ``x`` from one row of interface velocities.

    ``V_row[i]`` sits at ``x_min + i dx``.  The default picks the closest
    interface, ``interpolate=True`` blends the two neighbours linearly.
    """
    s = (np.asarray(x, dtype=float) - x_min) / dx
    last = V_row.shape[0] - 1
    if not interpolate:
        return V_row[np.clip(np.floor(s + 0.5).astype(int), 0, last)]
    i = np.clip(np.floor(s).astype(int), 0, last - 1)
    w = np.clip(s - i, 0.0, 1.0)
    return (1.0 - w) * V_row[i] + w * V_row[i + 1]


def trace(
    traj: Trajectory,
    starts: Sequence[tuple],
    interpolate: bool = False,
) -> list:
    """Integrate ``x' = V(t, x)`` from every ``(t0, x0)`` on the solver time mesh.

    ``t0`` must be one of the solver step times.  A path that leaves the
    window is held at the edge from then on and flagged ``clipped``.  A bad
    start yields a trace carrying ``error`` instead of raising.
    """
    V = traj.v_history
    if V is None:
        raise InvariantViolation("tracing needs a trajectory simulated with record_history=True")
    grid = traj.config.grid
    times = traj.step_times
    out = []
    for t0, x0 in starts:
        t0, x0 = float(t0), float(x0)
        try:
            if not grid.x_min <= x0 <= grid.x_max:
                raise DomainError(f"start position {x0!r} outside [{grid.x_min!r}, {grid.x_max!r}]")
            n0 = _start_step(times, t0)
        except DomainError as exc:
            out.append(CharacteristicTrace(x0, t0, np.empty((0, 2)), error=str(exc)))
            continue
        xs = np.empty(len(times) - n0)
        xs[0] = x0
        clipped = False
        x = x0
        for i, n in enumerate(range(n0, len(times) - 1)):
            if not clipped:
                x = x + (times[n + 1] - times[n]) * float(velocity_at(V[n], x, grid.x_min, grid.dx, interpolate))
                if x > grid.x_max:
                    x, clipped = grid.x_max, True
            xs[i + 1] = x
        out.append(CharacteristicTrace(x0, t0, np.column_stack((times[n0:], xs)), clipped=clipped))
    return out


def max_inversion(traces: Sequence[CharacteristicTrace]) -> float:
    """Largest amount by which traces sorted by start position swap order at a common time.

    Traces must share ``t0``; failed traces are skipped.
    """
    good = [tr for tr in traces if tr.ok]
    if len(good) < 2:
        return 0.0
    if len({tr.t0 for tr in good}) != 1:
        raise DomainError("ordering check needs a common start time")
    good.sort(key=lambda tr: tr.x0)
    pos = np.stack([tr.positions for tr in good])
    return float(max(0.0, np.max(pos[:-1] - pos[1:])))
