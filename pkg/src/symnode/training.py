"""Symmetry-regularized loss and parameter identification for the toy model.

The total loss is

    MSE + a1*sum F^2 + a2*sum G^2 + a3*sum H^2 + a4*sum I^2

where F and G are evaluated at the predicted states at every observation
time, and H and I at the adjoint state sampled from the backward pass of the
MSE gradient at the same times. H and I are divided by max(1, |u|) first.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import conservation as cons
from .adjoint import Gradient, adjoint_gradient, fd_gradient, forward_predictions
from .conservation import ResidualMode
from .errors import ConfigError, DegenerateRegularizerError, DomainError, NumericalError
from .lie import GroupConstants
from .model import ModelParams
from .ode import Method, SolverConfig

DEFAULT_GROUP = GroupConstants(epsilon=1e-2, c1=1.0, c2=0.0, c3=0.5, k2=0.0, k3=1.0, k4=0.0)
DEFAULT_SOLVER = SolverConfig(method=Method.RK4_FIXED, h=1e-2)


class Optimizer(str, Enum):
    GD = "gd"
    ADAM = "adam"


@dataclass(frozen=True)
class LossWeights:
    a1: float = 1e-2
    a2: float = 1e-2
    a3: float = 1e-2
    a4: float = 1e-2

    def __post_init__(self):
        for name in ("a1", "a2", "a3", "a4"):
            val = float(getattr(self, name))
            if not (math.isfinite(val) and val >= 0):
                raise ConfigError(f"loss weight {name} must be finite and >= 0, got {val}")
            object.__setattr__(self, name, val)

    @classmethod
    def zero(cls) -> "LossWeights":
        return cls(0.0, 0.0, 0.0, 0.0)

    def as_tuple(self):
        return (self.a1, self.a2, self.a3, self.a4)


@dataclass(frozen=True)
class LossBreakdown:
    mse: float
    reg_f: float
    reg_g: float
    reg_h: float
    reg_i: float
    total: float
    skipped: int = 0

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class TrainConfig:
    optimizer: Optimizer = Optimizer.ADAM
    learning_rate: float = 5e-2
    max_iters: int = 500
    grad_tol: float = 1e-6
    fd_step: float = 1e-6
    weights: LossWeights = field(default_factory=LossWeights)
    gc: GroupConstants = DEFAULT_GROUP
    mode: ResidualMode = ResidualMode.CHAIN
    seed: int = 0
    solver: SolverConfig = DEFAULT_SOLVER
    adjoint_check_every: int = 10
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        object.__setattr__(self, "mode", ResidualMode(self.mode))
        if not 0 < self.learning_rate <= 1:
            raise ConfigError(f"learning_rate must lie in (0, 1], got {self.learning_rate}")
        if not 1e-8 <= self.fd_step <= 1e-3:
            raise ConfigError(f"fd_step must lie in [1e-8, 1e-3], got {self.fd_step}")
        if self.max_iters < 0:
            raise ConfigError(f"max_iters must be >= 0, got {self.max_iters}")
        if not self.grad_tol >= 0:
            raise ConfigError(f"grad_tol must be >= 0, got {self.grad_tol}")

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class PathEntry:
    iter: int
    theta1: float
    theta2: float
    loss: LossBreakdown
    grad_norm: float
    adjoint_fd_gap: float = math.nan


@dataclass(eq=False)
class TrainingReport:
    theta_path: list
    final_params: ModelParams
    converged: bool
    wall_time: float = 0.0
    failure: str | None = None

    @property
    def iterations(self) -> int:
        return self.theta_path[-1].iter

    @property
    def final_loss(self) -> LossBreakdown:
        return self.theta_path[-1].loss

    def same_as(self, other: "TrainingReport") -> bool:
        """Equality ignoring wall time (nan gaps compare equal)."""
        def key(r):
            return [
                (e.iter, e.theta1, e.theta2, e.loss, e.grad_norm, repr(e.adjoint_fd_gap))
                for e in r.theta_path
            ], r.final_params, r.converged, r.failure

        return key(self) == key(other)


def _records(dataset):
    return list(getattr(dataset, "experiments", dataset))


def _needs_adjoint(cfg: TrainConfig) -> bool:
    w = cfg.weights
    if w.a3 > 0 or w.a4 > 0:
        return True
    return w.a2 > 0 and cfg.mode is ResidualMode.CHAIN and cfg.gc.k4 != 0


def _sum_squares(values, active, name):
    vals = [v for v in values if v is not None]
    if active and values and not vals:
        raise DegenerateRegularizerError(f"every evaluation point of regularizer {name} was skipped")
    return math.fsum(v * v for v in vals)


def loss_total(dataset, p: ModelParams, cfg: TrainConfig) -> LossBreakdown:
    """MSE plus weighted squared conservation residuals.

    Evaluation points where a residual is undefined (equilibria, u <= 0 with
    k4 != 0) are skipped and counted in ``LossBreakdown.skipped``.
    """
    records = _records(dataset)
    if not records:
        raise ValueError("empty dataset")
    w = cfg.weights
    adj = adjoint_gradient(records, p, cfg.solver) if _needs_adjoint(cfg) else None
    preds = adj.predictions if adj is not None else forward_predictions(records, p, cfg.solver)
    n_total = sum(len(r.observations) for r in records)
    sq = []
    for zh, rec in zip(preds, records):
        sq.extend(((zh - np.array(rec.values)) ** 2).tolist())
    mse = math.fsum(sq) / n_total
    if not math.isfinite(mse):
        raise NumericalError(f"non-finite mse at theta=({p.theta1}, {p.theta2})")

    gc, mode = cfg.gc, cfg.mode
    skipped = 0

    def attempt(fn, *args, **kw):
        nonlocal skipped
        try:
            return fn(*args, **kw)
        except DomainError:
            skipped += 1
            return None

    F, G, H, I = [], [], [], []
    for i, (zh, rec) in enumerate(zip(preds, records)):
        states = [adj.paths[i].sample(t) for t in rec.times] if adj is not None else None
        for k, z in enumerate(zh):
            z = float(z)
            if w.a1 > 0:
                F.append(attempt(cons.residual_F, z, p, gc, mode))
            if w.a2 > 0:
                u = float(states[k].u) if states is not None else 1.0
                G.append(attempt(cons.residual_G, z, p, gc, mode, u=u))
            if states is not None:
                s = states[k]
                norm = max(1.0, abs(float(s.u)))
                if w.a3 > 0:
                    r = attempt(cons.residual_H, float(s.z), float(s.u), float(s.v), p, gc, mode)
                    H.append(None if r is None else r / norm)
                if w.a4 > 0:
                    r = attempt(cons.residual_I, float(s.z), float(s.u), float(s.w), p, gc, mode)
                    I.append(None if r is None else r / norm)

    reg_f = _sum_squares(F, w.a1 > 0, "F")
    reg_g = _sum_squares(G, w.a2 > 0, "G")
    reg_h = _sum_squares(H, w.a3 > 0, "H")
    reg_i = _sum_squares(I, w.a4 > 0, "I")
    total = mse + w.a1 * reg_f + w.a2 * reg_g + w.a3 * reg_h + w.a4 * reg_i
    if not math.isfinite(total):
        raise NumericalError(f"non-finite loss at theta=({p.theta1}, {p.theta2})")
    return LossBreakdown(mse, reg_f, reg_g, reg_h, reg_i, total, skipped)


def total_gradient(dataset, p: ModelParams, cfg: TrainConfig) -> Gradient:
    """Central-difference gradient of the total loss over (theta1, theta2)."""
    return fd_gradient(lambda q: loss_total(dataset, q, cfg).total, p, cfg.fd_step)


def train(dataset, p0: ModelParams, cfg: TrainConfig) -> TrainingReport:
    """Minimize :func:`loss_total` from ``p0`` with gradient descent or Adam.

    Every ``cfg.adjoint_check_every`` iterations the adjoint gradient of the
    MSE is compared with the finite-difference total gradient; the max-abs
    difference is stored as ``adjoint_fd_gap`` (nan elsewhere). A numerical
    failure stops training and keeps the path up to the last valid iterate.
    """
    start = time.perf_counter()
    records = _records(dataset)
    theta = p0.as_array().astype(float)
    m = np.zeros(2)
    v = np.zeros(2)
    path = []
    converged = False
    failure = None
    for it in range(cfg.max_iters + 1):
        p = ModelParams.from_array(theta)
        try:
            loss = loss_total(records, p, cfg)
            g = total_gradient(records, p, cfg)
            gap = math.nan
            if cfg.adjoint_check_every and it % cfg.adjoint_check_every == 0:
                g_adj = adjoint_gradient(records, p, cfg.solver).gradient
                gap = float(np.max(np.abs(g_adj.as_array() - g.as_array())))
        except (NumericalError, DomainError) as exc:
            failure = f"iteration {it}: {exc}"
            break
        path.append(PathEntry(it, p.theta1, p.theta2, loss, g.norm, gap))
        if g.norm <= cfg.grad_tol:
            converged = True
            break
        if it == cfg.max_iters:
            break
        grad = g.as_array()
        if cfg.optimizer is Optimizer.GD:
            theta = theta - cfg.learning_rate * grad
        else:
            m = cfg.beta1 * m + (1 - cfg.beta1) * grad
            v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad
            m_hat = m / (1 - cfg.beta1 ** (it + 1))
            v_hat = v / (1 - cfg.beta2 ** (it + 1))
            theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + 1e-12)
        if not np.all(np.isfinite(theta)):
            failure = f"iteration {it}: non-finite parameter update"
            break
    if not path:
        raise NumericalError(f"training failed at the initial point: {failure}")
    last = path[-1]
    return TrainingReport(
        theta_path=path,
        final_params=ModelParams(last.theta1, last.theta2),
        converged=converged,
        wall_time=time.perf_counter() - start,
        failure=failure,
    )


@dataclass(eq=False)
class ComparisonReport:
    plain: TrainingReport
    regularized: TrainingReport
    mode: str
    deltas: dict


def _param_error(report, truth):
    if truth is None:
        return math.nan
    return max(abs(report.final_params.theta1 - truth.theta1), abs(report.final_params.theta2 - truth.theta2))


def compare_runs(dataset, p0: ModelParams, cfg_plain: TrainConfig, cfg_reg: TrainConfig) -> ComparisonReport:
    """Train with both configs on the same data and report side-by-side deltas."""
    strip = dict(weights=LossWeights.zero(), gc=DEFAULT_GROUP, mode=ResidualMode.CHAIN)
    if cfg_plain.replace(**strip) != cfg_reg.replace(**strip):
        raise ConfigError("compared configs may differ only in weights, group constants and mode")
    plain = train(dataset, p0, cfg_plain)
    reg = train(dataset, p0, cfg_reg)
    truth = dataset.true_params() if hasattr(dataset, "true_params") else None
    e_plain, e_reg = _param_error(plain, truth), _param_error(reg, truth)
    deltas = {
        "param_error_plain": e_plain,
        "param_error_reg": e_reg,
        "param_error_delta": e_reg - e_plain,
        "mse_delta": reg.final_loss.mse - plain.final_loss.mse,
        "iterations_plain": plain.iterations,
        "iterations_reg": reg.iterations,
        "theta_delta": [
            reg.final_params.theta1 - plain.final_params.theta1,
            reg.final_params.theta2 - plain.final_params.theta2,
        ],
    }
    return ComparisonReport(plain, reg, cfg_reg.mode.value, deltas)
