"""Symmetry-regularized neural ODE for a charged particle in a sinusoidal field."""

from .adjoint import AdjointState, Gradient, adjoint_gradient, fd_gradient, rhs_backward
from .conservation import ResidualMode, residual_F, residual_G, residual_H, residual_I
from .datagen import Dataset, ExperimentRecord, generate_dataset, load_dataset, save_dataset
from .lie import (
    GroupConstants,
    backward_infinitesimals,
    backward_transform,
    determining_residual_forward,
    determining_residuals_backward,
    epsilon_scaling_audit,
    forward_infinitesimals,
    forward_transform,
)
from .model import ModelParams, exact_solution, field_and_accel, rhs_forward, rhs_jacobians
from .ode import Method, SolverConfig, TimeSpan, Trajectory, integrate, integrate_adaptive, integrate_fixed, rk4_step, sample
from .training import LossBreakdown, LossWeights, TrainConfig, compare_runs, loss_total, train

__version__ = "0.1.0"
