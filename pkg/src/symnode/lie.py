"""Lie point symmetries of the forward and adjoint systems.

Forward system  z' = cos(phi), phi = theta1*z + theta2, generator

    T = c1*t + c2
    Z = (c1/theta1) * cos(phi) * artanh(sin(phi)) + c3*cos(phi)

Adjoint system (u, v, w, z), generator

    T = k2,  Z = k4*tan(phi),  U = k3*u + k4*theta1*u*ln(u)
    V = (k3 + k4*theta1*ln(u))*v + g(u),  W = (k3 + k4*theta1*ln(u))*w + h(u)

The determining-equation residuals below apply the first prolongation
``X_[t] = D_t(X) - x' D_t(T)`` with every total-derivative term kept, and
with x' replaced by the system's right-hand side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import DomainError, SingularityError
from .model import THETA1_MIN, ModelParams

TAN_MIN_COS = 1e-9
ARTANH_MAX_SIN = 1 - 1e-9
U_MIN = 1e-12


@dataclass(frozen=True)
class GroupConstants:
    epsilon: float = 1e-2
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    k4: float = 0.0
    g_coeffs: tuple = (0.0,)  # ascending powers of u
    h_coeffs: tuple = (0.0,)

    def __post_init__(self):
        for name in ("epsilon", "c1", "c2", "c3", "k2", "k3", "k4"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "g_coeffs", tuple(float(c) for c in self.g_coeffs) or (0.0,))
        object.__setattr__(self, "h_coeffs", tuple(float(c) for c in self.h_coeffs) or (0.0,))
        if not math.isfinite(self.epsilon):
            raise DomainError(f"epsilon must be finite, got {self.epsilon}")

    def g(self, u):
        return P.polyval(u, self.g_coeffs)

    def dg(self, u):
        return P.polyval(u, P.polyder(self.g_coeffs)) if len(self.g_coeffs) > 1 else 0.0 * u

    def h(self, u):
        return P.polyval(u, self.h_coeffs)

    def dh(self, u):
        return P.polyval(u, P.polyder(self.h_coeffs)) if len(self.h_coeffs) > 1 else 0.0 * u

    @property
    def exact_subgroup(self) -> bool:
        """True when the adjoint generator satisfies all determining equations."""
        return self.k4 == 0 and len(self.g_coeffs) == 1 and len(self.h_coeffs) == 1

    def replace(self, **kw) -> "GroupConstants":
        from dataclasses import replace

        return replace(self, **kw)


class ForwardInfinitesimals(NamedTuple):
    T: float
    Z: float
    T_t: float
    T_z: float
    Z_t: float
    Z_z: float


class BackwardInfinitesimals(NamedTuple):
    T: float
    Z: float
    U: float
    V: float
    W: float
    T_t: float
    Z_z: float
    U_u: float
    V_u: float
    V_v: float
    W_u: float
    W_w: float


def _forward_phase(z, p):
    if abs(p.theta1) < THETA1_MIN:
        raise DomainError(f"forward symmetry needs |theta1| >= {THETA1_MIN}, got {p.theta1}")
    phi = p.theta1 * z + p.theta2
    s = math.sin(phi)
    if abs(s) > ARTANH_MAX_SIN:
        raise SingularityError(f"artanh(sin(phi)) singular at phi={phi!r}")
    return phi, s, math.cos(phi)


def _backward_phase(z, p):
    phi = p.theta1 * z + p.theta2
    c = math.cos(phi)
    if abs(c) < TAN_MIN_COS:
        raise SingularityError(f"tan(phi) singular at phi={phi!r}")
    return phi, math.sin(phi), c


def forward_infinitesimals(t, z, p: ModelParams, gc: GroupConstants) -> ForwardInfinitesimals:
    _, s, c = _forward_phase(z, p)
    A = math.atanh(s)
    Z = gc.c1 / p.theta1 * c * A + gc.c3 * c
    Z_z = gc.c1 * (1 - s * A) - gc.c3 * p.theta1 * s
    return ForwardInfinitesimals(gc.c1 * t + gc.c2, Z, gc.c1, 0.0, 0.0, Z_z)


def backward_infinitesimals(s, p: ModelParams, gc: GroupConstants) -> BackwardInfinitesimals:
    u, v, w, z = s.u, s.v, s.w, s.z
    if not u > U_MIN:
        raise DomainError(f"adjoint symmetry needs u > {U_MIN} (ln u), got u={u!r}")
    phi, _, c = _backward_phase(z, p)
    lnu = math.log(u)
    a = gc.k3 + gc.k4 * p.theta1 * lnu
    k4t = gc.k4 * p.theta1
    return BackwardInfinitesimals(
        T=gc.k2,
        Z=gc.k4 * math.tan(phi),
        U=gc.k3 * u + k4t * u * lnu,
        V=a * v + float(gc.g(u)),
        W=a * w + float(gc.h(u)),
        T_t=0.0,
        Z_z=k4t / (c * c),
        U_u=gc.k3 + k4t * (lnu + 1),
        V_u=k4t * v / u + float(gc.dg(u)),
        V_v=a,
        W_u=k4t * w / u + float(gc.dh(u)),
        W_w=a,
    )


def forward_transform(t, z, p: ModelParams, gc: GroupConstants, literal: bool = False):
    """Finite forward transformation (t_bar, z_bar) at group parameter ``gc.epsilon``.

    The default applies x_bar = x + eps*X to both variables. ``literal=True``
    reproduces the printed formula, where the c3*cos(phi) term of z_bar is
    not multiplied by eps.
    """
    eps = gc.epsilon
    inf = forward_infinitesimals(t, z, p, gc)
    t_bar = gc.c2 * eps + (1 + gc.c1 * eps) * t
    if literal:
        _, s, c = _forward_phase(z, p)
        return t_bar, z + eps * gc.c1 * c * math.atanh(s) / p.theta1 + gc.c3 * c
    return t_bar, z + eps * inf.Z


def backward_transform(t, s, p: ModelParams, gc: GroupConstants, literal: bool = False):
    """Finite adjoint transformation (t, z, u, v, w) -> barred values.

    ``literal=True`` keeps the printed u_bar = (1 + k3*eps + k4*theta1*ln u)*u,
    i.e. without eps on the logarithmic term.
    """
    eps = gc.epsilon
    inf = backward_infinitesimals(s, p, gc)
    u_bar = s.u + eps * inf.U
    if literal:
        u_bar = (1 + gc.k3 * eps + gc.k4 * p.theta1 * math.log(s.u)) * s.u
    return (
        t + eps * inf.T,
        s.z + eps * inf.Z,
        u_bar,
        s.v + eps * inf.V,
        s.w + eps * inf.W,
    )


def _fd_forward_candidate(t, z, T_fn, Z_fn, step=1e-6):
    T_t = (T_fn(t + step, z) - T_fn(t - step, z)) / (2 * step)
    T_z = (T_fn(t, z + step) - T_fn(t, z - step)) / (2 * step)
    Z_t = (Z_fn(t + step, z) - Z_fn(t - step, z)) / (2 * step)
    Z_z = (Z_fn(t, z + step) - Z_fn(t, z - step)) / (2 * step)
    return ForwardInfinitesimals(T_fn(t, z), Z_fn(t, z), T_t, T_z, Z_t, Z_z)


def determining_residual_forward(t, z, p: ModelParams, gc: GroupConstants = None, candidate=None) -> float:
    """Residual of the forward determining equation

        Z_t + (Z_z - T_t - T_z*cos(phi)) * cos(phi) + theta1 * Z * sin(phi)

    for the closed-form generator of ``gc``, or for ``candidate``: either a
    :class:`ForwardInfinitesimals` with its partials, or a pair of callables
    ``(T(t, z), Z(t, z))`` whose partials are taken by central differences.
    """
    if candidate is None:
        inf = forward_infinitesimals(t, z, p, gc)
    elif isinstance(candidate, ForwardInfinitesimals):
        inf = candidate
    else:
        inf = _fd_forward_candidate(t, z, *candidate)
    phi = p.theta1 * z + p.theta2
    s, c = math.sin(phi), math.cos(phi)
    return inf.Z_t + (inf.Z_z - inf.T_t - inf.T_z * c) * c + p.theta1 * inf.Z * s


def determining_residuals_backward(s, p: ModelParams, gc: GroupConstants):
    """(r1, r2, r3, r4): prolonged generator applied to the four adjoint equations."""
    inf = backward_infinitesimals(s, p, gc)
    u, z = s.u, s.z
    th = p.theta1
    phi = th * z + p.theta2
    sn, c = math.sin(phi), math.cos(phi)
    u_dot, v_dot, w_dot, z_dot = u * th * sn, u * z * sn, u * sn, c
    U_t = (inf.U_u - inf.T_t) * u_dot
    V_t = inf.V_u * u_dot + (inf.V_v - inf.T_t) * v_dot
    W_t = inf.W_u * u_dot + (inf.W_w - inf.T_t) * w_dot
    Z_t = (inf.Z_z - inf.T_t) * z_dot
    r1 = U_t - th * sn * inf.U - u * th * th * c * inf.Z
    r2 = V_t - z * sn * inf.U - u * sn * inf.Z - u * z * th * c * inf.Z
    r3 = W_t - sn * inf.U - u * th * c * inf.Z
    r4 = Z_t + th * sn * inf.Z
    return r1, r2, r3, r4


@dataclass(frozen=True)
class ScalingAudit:
    rows: tuple  # (epsilon, max |residual|)
    slope: float

    @property
    def ratios(self):
        m = [r[1] for r in self.rows]
        return [a / b if b else math.nan for a, b in zip(m, m[1:])]


def epsilon_scaling_audit(p: ModelParams, gc_base: GroupConstants, eps_list, grid, which="F", aux=(1.0, 0.5, 0.5)) -> ScalingAudit:
    """Max chain-rule conservation residual over ``grid`` (z values) for each epsilon.

    ``which`` picks the residual F, G, H or I; ``aux`` supplies (u, v, w) for
    the adjoint residuals. The slope is a least-squares fit of
    log(max residual) against log(epsilon); nan when some maximum is zero.
    """
    from . import conservation as cons

    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list) or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be positive and strictly decreasing")
    u, v, w = aux
    fn = {
        "F": lambda z, gc: cons.residual_F(z, p, gc, cons.ResidualMode.CHAIN),
        "G": lambda z, gc: cons.residual_G(z, p, gc, cons.ResidualMode.CHAIN, u=u),
        "H": lambda z, gc: cons.residual_H(z, u, v, p, gc, cons.ResidualMode.CHAIN),
        "I": lambda z, gc: cons.residual_I(z, u, w, p, gc, cons.ResidualMode.CHAIN),
    }[which]
    rows = []
    for eps in eps_list:
        gc = gc_base.replace(epsilon=eps)
        rows.append((eps, max(abs(fn(z, gc)) for z in grid)))
    m = np.array([r[1] for r in rows])
    if np.any(m <= 0):
        slope = math.nan
    else:
        slope = float(np.polyfit(np.log(eps_list), np.log(m), 1)[0])
    return ScalingAudit(tuple(rows), slope)
