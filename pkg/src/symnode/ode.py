"""Explicit Runge-Kutta integration with dense (Hermite) trajectory output.

Both integrators work on state vectors of any dimension. A right-hand side is
any callable ``rhs(t, x) -> array`` with the same shape as ``x``. Backward
spans (``t1 < t0``) are handled by integrating forward in the reversed time
variable ``s = |t - t0|``, so forward and adjoint passes share one code path.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, IntegrationError, OutOfRangeError

__all__ = [
    "Method",
    "TimeSpan",
    "SolverConfig",
    "Trajectory",
    "rk4_step",
    "integrate_fixed",
    "integrate_adaptive",
    "integrate",
    "sample",
]


class Method(str, Enum):
    RK4_FIXED = "rk4"
    RK45_ADAPTIVE = "rk45"


@dataclass(frozen=True)
class TimeSpan:
    t0: float
    t1: float

    def __post_init__(self):
        if not (math.isfinite(self.t0) and math.isfinite(self.t1)):
            raise ConfigError(f"time span must be finite, got [{self.t0}, {self.t1}]")
        if self.t0 == self.t1:
            raise ConfigError(f"empty time span [{self.t0}, {self.t1}]")

    @property
    def length(self) -> float:
        return abs(self.t1 - self.t0)

    @property
    def direction(self) -> float:
        return 1.0 if self.t1 > self.t0 else -1.0


@dataclass(frozen=True)
class SolverConfig:
    method: Method = Method.RK45_ADAPTIVE
    h: float = 1e-2
    rtol: float = 1e-8
    atol: float = 1e-10
    max_steps: int = 100_000

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not self.h > 0:
            raise ConfigError(f"solver step h must be > 0, got {self.h}")
        for name in ("rtol", "atol"):
            val = getattr(self, name)
            if not 0 < val < 1:
                raise ConfigError(f"solver {name} must lie in (0, 1), got {val}")
        if int(self.max_steps) < 1:
            raise ConfigError(f"solver max_steps must be >= 1, got {self.max_steps}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Node times, states and right-hand-side values of an integration run.

    ``states`` and ``derivs`` have shape ``(n_nodes, dim)``. Times are strictly
    monotone, increasing for forward runs and decreasing for backward runs.
    """

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        states = np.array(self.states, dtype=float)
        derivs = np.array(self.derivs, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if derivs.ndim == 1:
            derivs = derivs[:, None]
        n = times.shape[0]
        if n < 2 or states.shape[0] != n or derivs.shape != states.shape:
            raise ValueError(
                f"inconsistent trajectory shapes: times {times.shape}, "
                f"states {states.shape}, derivs {derivs.shape}"
            )
        dt = np.diff(times)
        if not (np.all(dt > 0) or np.all(dt < 0)):
            raise ValueError("trajectory times must be strictly monotone")
        if not np.all(np.isfinite(states)):
            raise ValueError("trajectory contains non-finite states")
        for arr in (times, states, derivs):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "derivs", derivs)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1].copy()

    def __len__(self):
        return self.times.shape[0]

    def sample(self, t: float) -> np.ndarray:
        return sample(self, t)

    def columns(self, idx) -> "Trajectory":
        """Sub-trajectory restricted to the given state components."""
        return Trajectory(self.times, self.states[:, idx], self.derivs[:, idx])


def _check_finite(vec, t, what="stage value"):
    # a sum is non-finite iff some entry is (inf - inf gives nan)
    if not math.isfinite(float(np.sum(vec))):
        raise IntegrationError(f"non-finite {what} at t={t!r}", t=t)


def _rk4(rhs, t, x, h, k1):
    k2 = np.asarray(rhs(t + 0.5 * h, x + 0.5 * h * k1), dtype=float)
    k3 = np.asarray(rhs(t + 0.5 * h, x + 0.5 * h * k2), dtype=float)
    k4 = np.asarray(rhs(t + h, x + h * k3), dtype=float)
    x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _check_finite(x_new, t, "stage value in step")
    return x_new


def rk4_step(rhs, t, x, h):
    """One classical fourth-order Runge-Kutta step from ``(t, x)`` with step ``h``."""
    if h == 0:
        raise ConfigError("rk4_step needs a non-zero step")
    x = np.asarray(x, dtype=float)
    k1 = np.asarray(rhs(t, x), dtype=float)
    _check_finite(k1, t)
    return _rk4(rhs, t, x, h, k1)


def _reversed(rhs, span):
    """Right-hand side in the variable s = direction * (t - t0), s in [0, L]."""
    t0, sgn = span.t0, span.direction
    if sgn > 0:
        return lambda s, x: rhs(t0 + s, x)
    return lambda s, x: -np.asarray(rhs(t0 - s, x), dtype=float)


def _to_trajectory(s_nodes, states, derivs, span):
    sgn = span.direction
    times = span.t0 + sgn * np.asarray(s_nodes)
    times[-1] = span.t1
    derivs = np.asarray(derivs) * sgn
    return Trajectory(times, np.asarray(states), derivs)


def integrate_fixed(rhs, x0, span: TimeSpan, h: float, max_steps: int = 1_000_000) -> Trajectory:
    """Fixed-step RK4 over ``span``; the last step is shortened to land on ``t1``."""
    if not h > 0:
        raise ConfigError(f"step h must be > 0, got {h}")
    length = span.length
    n_steps = max(1, int(math.ceil(length / h - 1e-9)))
    if n_steps > max_steps:
        raise IntegrationError(
            f"{n_steps} fixed steps needed for span length {length} with h={h}, "
            f"exceeds max_steps={max_steps}",
            t=span.t0,
        )
    f = _reversed(rhs, span)
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    _check_finite(x, span.t0, "initial state")
    k1 = np.asarray(f(0.0, x), dtype=float)
    _check_finite(k1, span.t0)
    s_nodes, states, derivs = [0.0], [x], [k1]
    for k in range(n_steps):
        s = k * h
        s_next = length if k == n_steps - 1 else (k + 1) * h
        try:
            x = _rk4(f, s, x, s_next - s, k1)
        except IntegrationError:
            t = span.t0 + span.direction * s
            raise IntegrationError(f"non-finite stage value in step from t={t!r}", t=t) from None
        k1 = np.asarray(f(s_next, x), dtype=float)
        _check_finite(k1, span.t0 + span.direction * s_next)
        s_nodes.append(s_next)
        states.append(x)
        derivs.append(k1)
    return _to_trajectory(s_nodes, states, derivs, span)


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4

_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 10.0


def _dopri_step(f, s, x, h, k1):
    ks = [k1]
    for i in range(1, 7):
        xi = x + h * sum(a * k for a, k in zip(_A[i], ks))
        ks.append(np.asarray(f(s + _C[i] * h, xi), dtype=float))
    # stage 7 is evaluated at the 5th-order solution (FSAL)
    x_new = x + h * sum(b * k for b, k in zip(_B5[:6], ks[:6]))
    err = h * sum(e * k for e, k in zip(_E, ks))
    return x_new, err, ks[6]


def _initial_step(f, x0, f0, rtol, atol, length):
    scale = atol + rtol * np.abs(x0)
    d0 = float(np.max(np.abs(x0) / scale))
    d1 = float(np.max(np.abs(f0) / scale))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, length)
    f1 = np.asarray(f(h0, x0 + h0 * f0), dtype=float)
    d2 = float(np.max(np.abs(f1 - f0) / scale)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, length)


def integrate_adaptive(rhs, x0, span: TimeSpan, cfg: SolverConfig) -> Trajectory:
    """Adaptive Dormand-Prince 5(4) integration with a standard step controller.

    A step is accepted when every component of the embedded error estimate
    satisfies ``|err_i| <= atol + rtol * max(|x_i|, |x_new_i|)``.
    """
    length = span.length
    f = _reversed(rhs, span)
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    _check_finite(x, span.t0, "initial state")
    k1 = np.asarray(f(0.0, x), dtype=float)
    _check_finite(k1, span.t0)
    h = _initial_step(f, x, k1, cfg.rtol, cfg.atol, length)
    h_min = 1e-14 * length
    s = 0.0
    s_nodes, states, derivs = [0.0], [x], [k1]
    attempts = 0
    rejected_last = False
    while s < length:
        if attempts >= cfg.max_steps:
            raise IntegrationError(
                f"max_steps={cfg.max_steps} exceeded at t={span.t0 + span.direction * s}",
                t=span.t0 + span.direction * s,
            )
        if h < h_min:
            raise IntegrationError(
                f"step size underflow (h={h:.3e}) at t={span.t0 + span.direction * s}",
                t=span.t0 + span.direction * s,
            )
        attempts += 1
        last = s + h >= length * (1 - 1e-12)
        h_try = length - s if last else h
        x_new, err, k_new = _dopri_step(f, s, x, h_try, k1)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(x), np.abs(x_new))
        err_norm = float(np.max(np.abs(err) / scale))
        if not math.isfinite(err_norm):
            raise IntegrationError(
                f"non-finite error estimate at t={span.t0 + span.direction * s}",
                t=span.t0 + span.direction * s,
            )
        if err_norm <= 1.0:
            s = length if last else s + h_try
            x, k1 = x_new, k_new
            s_nodes.append(s)
            states.append(x)
            derivs.append(k1)
            fac = _FAC_MAX if err_norm == 0 else _SAFETY * err_norm ** (-1 / 5)
            fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            if rejected_last:
                fac = min(fac, 1.0)
            h = h_try * fac
            rejected_last = False
        else:
            h = h_try * max(_FAC_MIN, _SAFETY * err_norm ** (-1 / 5))
            rejected_last = True
    return _to_trajectory(s_nodes, states, derivs, span)


def integrate(rhs, x0, span: TimeSpan, cfg: SolverConfig) -> Trajectory:
    """Dispatch to the integrator selected by ``cfg.method``."""
    if cfg.method is Method.RK4_FIXED:
        return integrate_fixed(rhs, x0, span, cfg.h, max_steps=cfg.max_steps)
    return integrate_adaptive(rhs, x0, span, cfg)


def sample(traj: Trajectory, t: float) -> np.ndarray:
    """Cubic Hermite interpolation of a trajectory at time ``t``.

    Exact at nodes. Raises :class:`OutOfRangeError` outside the node hull.
    """
    times = traj.times
    increasing = times[-1] > times[0]
    lo, hi = (times[0], times[-1]) if increasing else (times[-1], times[0])
    if not lo <= t <= hi:
        raise OutOfRangeError(f"t={t!r} outside trajectory range [{lo}, {hi}]")
    key = times if increasing else -times
    tk = t if increasing else -t
    i = bisect.bisect_left(key, tk)
    if i < len(key) and key[i] == tk:
        return traj.states[i].copy()
    a, b = i - 1, i
    ta, tb = times[a], times[b]
    h = tb - ta
    r = (t - ta) / h
    r2, r3 = r * r, r * r * r
    h00 = 2 * r3 - 3 * r2 + 1
    h10 = r3 - 2 * r2 + r
    h01 = -2 * r3 + 3 * r2
    h11 = r3 - r2
    return (
        h00 * traj.states[a]
        + h10 * h * traj.derivs[a]
        + h01 * traj.states[b]
        + h11 * h * traj.derivs[b]
    )
