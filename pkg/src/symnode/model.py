"""Charged particle in a sinusoidal field, reduced to dz/dt = cos(theta1*z + theta2).

The single cosine neuron's weight and bias are ``theta1`` and ``theta2``.
Functions here accept floats or numpy arrays for ``z`` and broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

THETA1_MIN = 1e-8
EQUILIBRIUM_MARGIN = 1e-6


@dataclass(frozen=True)
class ModelParams:
    theta1: float
    theta2: float

    def __post_init__(self):
        object.__setattr__(self, "theta1", float(self.theta1))
        object.__setattr__(self, "theta2", float(self.theta2))
        if not (math.isfinite(self.theta1) and math.isfinite(self.theta2)):
            raise DomainError(f"non-finite parameters ({self.theta1}, {self.theta2})")

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2])

    @classmethod
    def from_array(cls, arr) -> "ModelParams":
        return cls(float(arr[0]), float(arr[1]))


def phase(z, p: ModelParams):
    """phi = theta1*z + theta2."""
    return p.theta1 * z + p.theta2


def rhs_forward(z, p: ModelParams):
    return np.cos(p.theta1 * z + p.theta2)


def rhs_jacobians(z, p: ModelParams):
    """Partials of the right-hand side: (df/dz, df/dtheta1, df/dtheta2)."""
    s = np.sin(p.theta1 * z + p.theta2)
    return -p.theta1 * s, -z * s, -s


def field_and_accel(x, p: ModelParams, E0: float = 1.0):
    """Electric field at position ``x`` and the resulting acceleration (q = m = 1)."""
    E = -(p.theta1 * E0 / 2.0) * np.sin(2.0 * (p.theta1 * x + p.theta2))
    return E, E


def gd(x):
    """Gudermannian function, arcsin(tanh x)."""
    return np.arcsin(np.tanh(x))


def gd_inv(phi):
    return np.arctanh(np.sin(phi))


def exact_solution(z0, t, p: ModelParams):
    """Closed-form flow of dz/dt = cos(theta1*z + theta2) from z(0) = z0.

    For |theta1| < 1e-8 the flow is the straight line z0 + t*cos(theta2).
    Otherwise the phase obeys phi' = theta1*cos(phi), solved by the
    Gudermannian; the initial phase must stay 1e-6 inside (-pi/2, pi/2).
    """
    if abs(p.theta1) < THETA1_MIN:
        return z0 + t * math.cos(p.theta2)
    phi0 = p.theta1 * np.asarray(z0, dtype=float) + p.theta2
    if np.any(np.abs(phi0) >= math.pi / 2 - EQUILIBRIUM_MARGIN):
        raise DomainError(
            f"initial phase {phi0} outside (-pi/2, pi/2) with margin {EQUILIBRIUM_MARGIN}"
        )
    if np.ndim(z0) == 0 and np.ndim(t) == 0 and t == 0:
        return z0
    phi = gd(p.theta1 * np.asarray(t, dtype=float) + gd_inv(phi0))
    out = (phi - p.theta2) / p.theta1
    return np.where(np.asarray(t) == 0, z0, out) if np.ndim(out) else float(out)


def solve_batch(z0s, times, p: ModelParams, cfg):
    """Integrate every initial condition in ``z0s`` at once and sample at ``times``.

    ``times`` is an increasing sequence of positive observation times; each
    one is made a node of the integration so no interpolation is involved.
    Returns ``(values, traj_segments)`` where ``values[k, i]`` is z_i(times[k]).
    """
    from .ode import TimeSpan, integrate

    z = np.asarray(z0s, dtype=float).copy()
    rhs = lambda t, x: np.cos(p.theta1 * x + p.theta2)
    values = np.empty((len(times), z.shape[0]))
    segments = []
    t_prev = 0.0
    for k, t in enumerate(times):
        if t > t_prev:
            traj = integrate(rhs, z, TimeSpan(t_prev, float(t)), cfg)
            segments.append(traj)
            z = traj.final
        values[k] = z
        t_prev = float(t)
    return values, segments
