"""Fixed-step classical Runge-Kutta integration and the trajectory container."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import BlowUpError

DEFAULT_BOUND = 1e6


@dataclass
class Trajectory:
    """Time-stamped states of a curve, with optional momenta and controls.

    ``q`` has shape ``(N, n)``.  ``p`` (covectors, coordinate coframe),
    ``u`` (controls / frame coefficients of the velocity), ``v`` (chart
    velocities) and ``k`` (annihilator fibre coordinates) are parallel arrays
    when present.
    """

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray | None = None
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    k: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    status: str = "ok"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        n = len(self.times)
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("trajectory times must be strictly increasing")
        for name in ("q", "p", "u", "v", "k"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise ValueError(f"array {name!r} has {len(arr)} rows, expected {n}")

    def __len__(self):
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.q[-1]

    def interpolant(self, name: str = "q") -> CubicSpline:
        return CubicSpline(self.times, getattr(self, name), axis=0)

    def control_function(self) -> Callable[[float], np.ndarray]:
        """Cubic-spline interpolant of the recorded controls."""
        if self.u is None:
            from .errors import MissingControls

            raise MissingControls("trajectory carries no controls")
        spline = CubicSpline(self.times, self.u, axis=0)
        return lambda t: spline(t)

    def columns(self) -> tuple[list[str], np.ndarray]:
        """Header and table for CSV emission: t, q1..qn, then the first of p/u/k."""
        n = self.q.shape[1]
        header = ["t"] + [f"q{i + 1}" for i in range(n)]
        blocks = [self.times[:, None], self.q]
        for name, prefix in (("p", "p"), ("u", "u"), ("k", "k")):
            arr = getattr(self, name)
            if arr is not None:
                header += [f"{prefix}{i + 1}" for i in range(arr.shape[1])]
                blocks.append(arr)
                break
        return header, np.hstack(blocks)


def step_count(T: float, h: float) -> int:
    if not (T > 0 and h > 0):
        raise ValueError("T and h must be positive")
    return max(1, int(math.ceil(T / h - 1e-9)))


def rk4_step(rhs, t: float, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0,
    T: float,
    h: float,
    *,
    bound: float = DEFAULT_BOUND,
    bound_slice: slice = slice(None),
    t0: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``y' = rhs(t, y)`` on ``[t0, t0 + T]`` with ``ceil(T/h)`` equal steps.

    Raises :class:`BlowUpError` when a state leaves ``|y[bound_slice]| <= bound``
    or becomes non-finite.
    """
    n_steps = step_count(T, h)
    dt = T / n_steps
    y = np.array(y0, dtype=np.result_type(np.asarray(y0), float))
    out = np.empty((n_steps + 1,) + y.shape, dtype=y.dtype)
    out[0] = y
    for i in range(n_steps):
        t = t0 + i * dt
        y = rk4_step(rhs, t, y, dt)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y[bound_slice]), initial=0.0) > bound:
            raise BlowUpError(f"state left the bound {bound:g} at t={t + dt:.6g}", t + dt)
        out[i + 1] = y
    times = t0 + dt * np.arange(n_steps + 1)
    return times, out


def rk4_floats(rhs, y0, T: float, h: float, *, bound: float = DEFAULT_BOUND,
               bound_count: int | None = None, t0: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Same scheme as :func:`rk4` on plain float lists; ``rhs(t, y) -> list``.

    Avoids array overhead for small systems.  ``bound_count`` limits the
    bound check to the leading entries.
    """
    n_steps = step_count(T, h)
    dt = T / n_steps
    y = [float(v) for v in y0]
    dim = len(y)
    nb = dim if bound_count is None else bound_count
    out = [y]
    half, sixth = 0.5 * dt, dt / 6.0
    rng = range(dim)
    isfinite = math.isfinite
    for i in range(n_steps):
        t = t0 + i * dt
        k1 = rhs(t, y)
        k2 = rhs(t + half, [y[j] + half * k1[j] for j in rng])
        k3 = rhs(t + half, [y[j] + half * k2[j] for j in rng])
        k4 = rhs(t + dt, [y[j] + dt * k3[j] for j in rng])
        y = [y[j] + sixth * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j]) for j in rng]
        if not all(map(isfinite, y)) or max(map(abs, y[:nb]), default=0.0) > bound:
            raise BlowUpError(f"state left the bound {bound:g} at t={t + dt:.6g}", t + dt)
        out.append(y)
    times = t0 + dt * np.arange(n_steps + 1)
    return times, np.array(out)


def relative_drift(values) -> float:
    """max_t |f(t) - f(0)| / |f(0)|, or the absolute drift when f(0) = 0."""
    values = np.asarray(values, dtype=float)
    ref = abs(values[0])
    drift = float(np.max(np.abs(values - values[0])))
    return drift / ref if ref > 0 else drift
