"""Adjoint sensitivity gradients of the mean-square loss.

The adjoint system integrated backward in time is

    u' = u*theta1*sin(phi),  v' = u*z*sin(phi),  w' = u*sin(phi),  z' = cos(phi)

with phi = theta1*z + theta2. ``u`` is dL/dz(t), while ``v`` and ``w``
accumulate dL/dtheta1 and dL/dtheta2 and are read off at t = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, OutOfRangeError
from .model import ModelParams, solve_batch
from .ode import SolverConfig, TimeSpan, integrate, sample


@dataclass(frozen=True)
class AdjointState:
    u: float
    v: float
    w: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.w, self.z])


@dataclass(frozen=True)
class Gradient:
    dL_dtheta1: float
    dL_dtheta2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dL_dtheta1, self.dL_dtheta2])

    @property
    def norm(self) -> float:
        return math.hypot(self.dL_dtheta1, self.dL_dtheta2)


def rhs_backward(s, p: ModelParams) -> np.ndarray:
    """Time derivative of (u, v, w, z); ``s`` is an AdjointState or a 4-vector."""
    u, v, w, z = s.as_array() if isinstance(s, AdjointState) else s
    sin_phi = np.sin(p.theta1 * z + p.theta2)
    return np.array(
        [u * p.theta1 * sin_phi, u * z * sin_phi, u * sin_phi, np.cos(p.theta1 * z + p.theta2)]
    )


class AdjointPath:
    """Dense backward adjoint solution of one experiment.

    A view onto the stacked backward solve: ``columns`` picks this record's
    (u, v, w, z) out of each backward segment. Segments run backward between
    consecutive observation times. At an observation time, :meth:`sample`
    returns the value that already includes that observation's jump in u.
    """

    def __init__(self, batch_segments, columns):
        self._batch = batch_segments
        self._cols = list(columns)

    @property
    def segments(self) -> tuple:
        return tuple(seg.columns(self._cols) for seg in self._batch)

    @property
    def t_end(self) -> float:
        return float(self._batch[0].times[0])

    def sample(self, t: float) -> AdjointState:
        for seg in self._batch:
            if seg.times[0] == t:
                return AdjointState(*seg.states[0, self._cols].tolist())
        for seg in self._batch:
            if seg.times[-1] <= t <= seg.times[0]:
                return AdjointState(*sample(seg, t)[self._cols].tolist())
        raise OutOfRangeError(f"t={t!r} outside adjoint path [0, {self.t_end}]")

    @property
    def initial(self) -> AdjointState:
        return AdjointState(*self._batch[-1].states[-1, self._cols].tolist())


@dataclass(frozen=True, eq=False)
class AdjointResult:
    gradient: Gradient
    a0: np.ndarray
    paths: list
    predictions: list = field(default_factory=list)
    z_drift: float = 0.0

    def __iter__(self):
        return iter((self.gradient, self.a0, self.paths))


def _union_times(records):
    times = sorted({float(t) for rec in records for t, _ in rec.observations})
    if not times or times[0] <= 0:
        raise ValueError("observation times must be positive")
    return times


def forward_predictions(records, p: ModelParams, cfg: SolverConfig):
    """Model predictions z_hat at each record's observation times.

    Returns a list (one array per record, ordered like its observations).
    """
    times = _union_times(records)
    index = {t: k for k, t in enumerate(times)}
    z0s = np.array([rec.z0 for rec in records], dtype=float)
    values, _ = solve_batch(z0s, times, p, cfg)
    return [
        np.array([values[index[float(t)], i] for t, _ in rec.observations])
        for i, rec in enumerate(records)
    ]


def mse_loss(records, p: ModelParams, cfg: SolverConfig) -> float:
    preds = forward_predictions(records, p, cfg)
    sq = [float(np.sum((zh - np.array([z for _, z in rec.observations])) ** 2))
          for zh, rec in zip(preds, records)]
    n_total = sum(len(rec.observations) for rec in records)
    return math.fsum(sq) / n_total


def adjoint_gradient(records, p: ModelParams, cfg: SolverConfig, jump_scale: float = 1.0) -> AdjointResult:
    """Gradient of the mean-square loss over all records by the adjoint method.

    All experiments are stacked into one vector ODE and integrated backward
    from the latest observation time to 0. At every observation time t_k the
    state adjoint jumps by 2*(z_hat - z_obs)/N_total (times ``jump_scale``),
    with v = w = 0 at the start. z is re-integrated backward alongside.
    """
    if not records:
        raise ValueError("adjoint_gradient needs at least one record")
    n = len(records)
    n_total = sum(len(rec.observations) for rec in records)
    times = _union_times(records)
    z0s = np.array([rec.z0 for rec in records], dtype=float)
    values, _ = solve_batch(z0s, times, p, cfg)

    jumps = np.zeros((len(times), n))
    index = {t: k for k, t in enumerate(times)}
    preds = []
    for i, rec in enumerate(records):
        zh = []
        for t, z_obs in rec.observations:
            k = index[float(t)]
            jumps[k, i] += jump_scale * 2.0 * (values[k, i] - z_obs) / n_total
            zh.append(values[k, i])
        preds.append(np.array(zh))

    th1, th2 = p.theta1, p.theta2

    def rhs(t, x):
        u, z = x[:n], x[3 * n:]
        phi = th1 * z + th2
        s = np.sin(phi)
        us = u * s
        return np.concatenate((th1 * us, us * z, us, np.cos(phi)))

    x = np.zeros(4 * n)
    x[3 * n:] = values[-1]
    segments = []
    drift = 0.0
    for k in range(len(times) - 1, -1, -1):
        x[:n] += jumps[k]
        t_next = times[k - 1] if k > 0 else 0.0
        traj = integrate(rhs, x, TimeSpan(times[k], t_next), cfg)
        segments.append(traj)
        x = traj.final
        if k > 0:
            drift = max(drift, float(np.max(np.abs(x[3 * n:] - values[k - 1]))))
        else:
            drift = max(drift, float(np.max(np.abs(x[3 * n:] - z0s))))
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite adjoint state at t=0")

    v0, w0 = x[n:2 * n], x[2 * n:3 * n]
    grad = Gradient(math.fsum(v0.tolist()), math.fsum(w0.tolist()))
    segments = tuple(segments)
    paths = [AdjointPath(segments, (i, n + i, 2 * n + i, 3 * n + i)) for i in range(n)]
    return AdjointResult(grad, x[:n].copy(), paths, preds, drift)


def fd_gradient(loss_eval, p: ModelParams, step: float = 1e-6) -> Gradient:
    """Central finite-difference gradient of ``loss_eval(ModelParams) -> float``."""
    if not step > 0:
        raise ValueError(f"fd step must be > 0, got {step}")
    out = []
    for j in range(2):
        probes = []
        for sgn in (1.0, -1.0):
            theta = p.as_array()
            theta[j] += sgn * step
            val = float(loss_eval(ModelParams.from_array(theta)))
            if not math.isfinite(val):
                raise NumericalError(f"non-finite loss probe at theta={theta.tolist()}")
            probes.append(val)
        out.append((probes[0] - probes[1]) / (2 * step))
    return Gradient(*out)
