"""Conservation-law residuals F (forward) and G, H, I (adjoint).

Each residual measures how far the transformed variables are from solving
the original equations, d x_bar / d t_bar - f(x_bar), after substituting
the right-hand sides for the untransformed derivatives.

``ResidualMode.LITERAL`` evaluates the expressions exactly as printed in the
source derivation. ``ResidualMode.CHAIN`` rebuilds them from the canonical
first-order transforms and the chain rule. For H and I the two coincide
algebraically; for F and G they differ (see the module tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import DomainError
from .lie import (
    U_MIN,
    GroupConstants,
    _backward_phase,
    _forward_phase,
    forward_infinitesimals,
)
from .model import ModelParams


class ResidualMode(str, Enum):
    LITERAL = "literal"
    CHAIN = "chain"


@dataclass(frozen=True)
class ResidualVector:
    F: float
    G: float
    H: float
    I: float


def residual_F(z, p: ModelParams, gc: GroupConstants, mode=ResidualMode.CHAIN) -> float:
    mode = ResidualMode(mode)
    eps = gc.epsilon
    phi, s, c = _forward_phase(z, p)
    if mode is ResidualMode.CHAIN:
        inf = forward_infinitesimals(0.0, z, p, gc)
        return c * (1 + eps * inf.Z_z) / (1 + gc.c1 * eps) - math.cos(phi + p.theta1 * eps * inf.Z)
    A = math.atanh(s)
    c1, c3, th = gc.c1, gc.c3, p.theta1
    return (
        c
        + c1 * eps * c
        - c1 * eps * s * c * A
        - c3 * th * s * c
        - math.cos(phi + c1 * eps * c * A + c3 * th * c)
    )


def _log_term(u, p, gc):
    """k4*theta1*ln(u); u only has to be positive when k4 != 0."""
    if gc.k4 == 0:
        return 0.0
    if not u > U_MIN:
        raise DomainError(f"ln(u) term needs u > {U_MIN}, got u={u!r}")
    return gc.k4 * p.theta1 * math.log(u)


def residual_G(z, p: ModelParams, gc: GroupConstants, mode=ResidualMode.CHAIN, u: float = 1.0) -> float:
    """State-adjoint conservation residual.

    CHAIN mode is divided through by u*theta1, so it depends on u only via
    ln(u) (needed when k4 != 0).
    """
    mode = ResidualMode(mode)
    eps = gc.epsilon
    phi, s, c = _backward_phase(z, p)
    shifted = math.sin(phi + gc.k4 * p.theta1 * eps * math.tan(phi))
    if mode is ResidualMode.LITERAL:
        return s - shifted
    scale = 1 + gc.k3 * eps + eps * _log_term(u, p, gc)
    return s * (scale + eps * gc.k4 * p.theta1) - scale * shifted


def _parameter_residual(z, u, y, p, gc, mode, which):
    mode = ResidualMode(mode)
    eps, th = gc.epsilon, p.theta1
    phi, s, c = _backward_phase(z, p)
    log_term = _log_term(u, p, gc)
    dpoly = gc.dg(u) if which == "v" else gc.dh(u)
    zf = z if which == "v" else 1.0  # v' = u z sin(phi), w' = u sin(phi)
    tan_phi = math.tan(phi)
    if mode is ResidualMode.LITERAL:
        scale = 1 + gc.k3 * eps + gc.k4 * th * eps * math.log(u) if gc.k4 else 1 + gc.k3 * eps
        zbar = z + gc.k4 * eps * tan_phi if which == "v" else 1.0
        return (
            th * eps * float(dpoly) * u * s
            + gc.k4 * th * th * eps * y * s
            + u * zf * scale * s
            - u * scale * zbar * math.sin(phi + gc.k4 * th * eps * tan_phi)
        )
    # d y_bar/dt = (1 + eps*Y_y) y' + eps*Y_u u';  t_bar = t + eps*k2 so dt_bar/dt = 1
    Y_y = gc.k3 + log_term
    Y_u = (gc.k4 * th * y / u if gc.k4 else 0.0) + float(dpoly)
    u_dot, y_dot = u * th * s, u * zf * s
    dy_bar = (1 + eps * Y_y) * y_dot + eps * Y_u * u_dot
    z_bar = z + eps * gc.k4 * tan_phi
    u_bar = u + eps * (gc.k3 * u + log_term * u)
    zf_bar = z_bar if which == "v" else 1.0
    return dy_bar - u_bar * zf_bar * math.sin(th * z_bar + p.theta2)


def residual_H(z, u, v, p: ModelParams, gc: GroupConstants, mode=ResidualMode.CHAIN) -> float:
    """theta1-adjoint conservation residual (uses g'(u))."""
    return _parameter_residual(z, u, v, p, gc, mode, "v")


def residual_I(z, u, w, p: ModelParams, gc: GroupConstants, mode=ResidualMode.CHAIN) -> float:
    """theta2-adjoint conservation residual (uses h'(u))."""
    return _parameter_residual(z, u, w, p, gc, mode, "w")


def residual_vector(z, u, v, w, p, gc, mode=ResidualMode.CHAIN) -> ResidualVector:
    return ResidualVector(
        residual_F(z, p, gc, mode),
        residual_G(z, p, gc, mode, u=u),
        residual_H(z, u, v, p, gc, mode),
        residual_I(z, u, w, p, gc, mode),
    )
