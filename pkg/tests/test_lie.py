import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symbolic_oracle import FORWARD_ORACLE, R1_SYMBOLIC, R4_GAP_SYMBOLIC, backward_residuals
from symnode.adjoint import AdjointState
from symnode.errors import DomainError, SingularityError
from symnode.lie import (
    ForwardInfinitesimals,
    GroupConstants,
    backward_infinitesimals,
    backward_transform,
    determining_residual_forward,
    determining_residuals_backward,
    epsilon_scaling_audit,
    forward_infinitesimals,
    forward_transform,
)
from symnode.model import ModelParams, exact_solution

E = math.e


def z_at(phi, p):
    return (phi - p.theta2) / p.theta1


# ---- symbolic oracle ----------------------------------------------------------

def test_symbolic_oracle_closed_forms():
    assert R4_GAP_SYMBOLIC == 0
    assert R1_SYMBOLIC == 0


# ---- infinitesimals ---------------------------------------------------------

def test_forward_infinitesimal_examples():
    p = ModelParams(1.0, 0.0)
    inf = forward_infinitesimals(2.0, 0.0, p, GroupConstants(c1=1))
    assert inf.T == 2.0 and inf.Z == 0.0
    assert forward_infinitesimals(0.0, 0.0, p, GroupConstants(c3=1)).Z == 1.0
    p2 = ModelParams(2.0, 0.0)
    inf = forward_infinitesimals(0.0, z_at(math.pi / 3, p2), p2, GroupConstants(c1=1))
    assert inf.Z == pytest.approx(0.3292394742, abs=1e-9)


def test_forward_infinitesimal_errors():
    with pytest.raises(SingularityError):
        forward_infinitesimals(0.0, math.pi / 2, ModelParams(1, 0), GroupConstants(c1=1))
    with pytest.raises(DomainError):
        forward_infinitesimals(0.0, 0.1, ModelParams(0.0, 0.2), GroupConstants(c1=1))


def test_backward_infinitesimal_examples():
    p = ModelParams(1.0, 0.0)
    inf = backward_infinitesimals(AdjointState(1.0, 0.3, -0.7, 0.4), p, GroupConstants(k2=0.5, k3=1))
    assert (inf.T, inf.Z, inf.U, inf.V, inf.W) == (0.5, 0.0, 1.0, 0.3, -0.7)
    inf = backward_infinitesimals(AdjointState(E, 0, 0, math.pi / 4), p, GroupConstants(k4=1))
    assert inf.Z == pytest.approx(1.0, abs=1e-15)
    assert inf.U == pytest.approx(E, abs=1e-15)
    assert inf.U_u == pytest.approx(2.0, abs=1e-15)
    inf = backward_infinitesimals(AdjointState(3.0, 1.0, 2.0, 0.2), p, GroupConstants(k2=1))
    assert inf.T == 1.0
    assert (inf.Z, inf.U, inf.V, inf.W) == (0.0, 0.0, 0.0, 0.0)


def test_backward_infinitesimal_errors():
    p = ModelParams(1.0, 0.0)
    for u in (0.0, -1.0):
        with pytest.raises(DomainError):
            backward_infinitesimals(AdjointState(u, 0, 0, 0.1), p, GroupConstants(k3=1))
    with pytest.raises(SingularityError):
        backward_infinitesimals(AdjointState(1.0, 0, 0, math.pi / 2), p, GroupConstants(k4=1))


def test_group_polynomials():
    gc = GroupConstants(g_coeffs=(1.0, 2.0, 3.0), h_coeffs=(4.0,))
    assert gc.g(2.0) == 17.0 and gc.dg(2.0) == 14.0
    assert gc.h(2.0) == 4.0 and gc.dh(2.0) == 0.0
    assert not gc.exact_subgroup
    assert GroupConstants(k3=2, g_coeffs=(5.0,)).exact_subgroup


@settings(max_examples=50, deadline=None)
@given(
    t=st.floats(-3, 3), phi=st.floats(-1.3, 1.3),
    th1=st.floats(0.5, 2.0), th2=st.floats(-0.5, 0.5),
    c=st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2)),
)
def test_forward_partials_match_fd(t, phi, th1, th2, c):
    p, gc, h = ModelParams(th1, th2), GroupConstants(c1=c[0], c2=c[1], c3=c[2]), 1e-6
    z = z_at(phi, p)
    inf = forward_infinitesimals(t, z, p, gc)
    at = lambda tt, zz: forward_infinitesimals(tt, zz, p, gc)
    assert inf.T_t == pytest.approx((at(t + h, z).T - at(t - h, z).T) / (2 * h), abs=1e-7)
    assert inf.T_z == pytest.approx((at(t, z + h).T - at(t, z - h).T) / (2 * h), abs=1e-7)
    assert inf.Z_t == pytest.approx((at(t + h, z).Z - at(t - h, z).Z) / (2 * h), abs=1e-7)
    assert inf.Z_z == pytest.approx((at(t, z + h).Z - at(t, z - h).Z) / (2 * h), abs=1e-7)


@settings(max_examples=50, deadline=None)
@given(
    u=st.floats(0.2, 5.0), v=st.floats(-2, 2), w=st.floats(-2, 2), phi=st.floats(-1.2, 1.2),
    th1=st.floats(0.5, 2.0), k=st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)),
    g=st.lists(st.floats(-1, 1), min_size=1, max_size=3),
)
def test_backward_partials_match_fd(u, v, w, phi, th1, k, g):
    p = ModelParams(th1, 0.1)
    gc = GroupConstants(k2=k[0], k3=k[1], k4=k[2], g_coeffs=tuple(g), h_coeffs=tuple(reversed(g)))
    z, h = z_at(phi, p), 1e-6
    inf = backward_infinitesimals(AdjointState(u, v, w, z), p, gc)
    at = lambda uu, vv, ww, zz: backward_infinitesimals(AdjointState(uu, vv, ww, zz), p, gc)
    fd = lambda f, a, b: (f(a) - f(b)) / (2 * h)
    assert inf.Z_z == pytest.approx(fd(lambda x: x.Z, at(u, v, w, z + h), at(u, v, w, z - h)), abs=1e-7)
    assert inf.U_u == pytest.approx(fd(lambda x: x.U, at(u + h, v, w, z), at(u - h, v, w, z)), abs=1e-7)
    assert inf.V_u == pytest.approx(fd(lambda x: x.V, at(u + h, v, w, z), at(u - h, v, w, z)), abs=1e-7)
    assert inf.V_v == pytest.approx(fd(lambda x: x.V, at(u, v + h, w, z), at(u, v - h, w, z)), abs=1e-7)
    assert inf.W_u == pytest.approx(fd(lambda x: x.W, at(u + h, v, w, z), at(u - h, v, w, z)), abs=1e-7)
    assert inf.W_w == pytest.approx(fd(lambda x: x.W, at(u, v, w + h, z), at(u, v, w - h, z)), abs=1e-7)
    assert inf.T_t == 0.0


# ---- transforms -------------------------------------------------------------

def test_forward_transform_examples():
    p = ModelParams(1.0, 0.2)
    gc0 = GroupConstants(epsilon=0.0, c1=1.5, c2=-0.3, c3=0.7)
    assert forward_transform(0.8, 0.1, p, gc0) == (0.8, 0.1)
    t_bar, _ = forward_transform(1.0, 0.1, p, GroupConstants(epsilon=0.01, c1=1))
    assert t_bar == pytest.approx(1.01, abs=1e-15)


def test_literal_forward_transform_drops_epsilon_on_c3():
    p, z = ModelParams(1.0, 0.2), 0.3
    gc = GroupConstants(epsilon=0.01, c1=1.0, c3=0.5)
    _, canon = forward_transform(0.0, z, p, gc)
    _, lit = forward_transform(0.0, z, p, gc, literal=True)
    assert lit - canon == pytest.approx((1 - gc.epsilon) * gc.c3 * math.cos(p.theta1 * z + p.theta2), abs=1e-15)


def test_backward_transform_examples():
    p = ModelParams(1.0, 0.0)
    s = AdjointState(2.0, 0.4, -0.6, 0.3)
    assert backward_transform(0.5, s, p, GroupConstants(epsilon=0.0, k2=1, k3=1, k4=1)) == (0.5, 0.3, 2.0, 0.4, -0.6)
    _, _, u, v, w = backward_transform(0.5, s, p, GroupConstants(epsilon=0.1, k3=1))
    assert (u, v, w) == pytest.approx((2.2, 0.44, -0.66), abs=1e-15)
    gc = GroupConstants(epsilon=0.01, k4=1)
    s = AdjointState(E, 0.0, 0.0, 0.0)
    # e * (1 + 0.01); the listed decimal 2.745491 is an arithmetic slip
    assert backward_transform(0.0, s, p, gc)[2] == pytest.approx(E * 1.01, abs=1e-14)
    assert backward_transform(0.0, s, p, gc)[2] == pytest.approx(2.7454646, abs=1e-7)
    assert backward_transform(0.0, s, p, gc, literal=True)[2] == pytest.approx(2 * E, abs=1e-14)


@settings(max_examples=20, deadline=None)
@given(
    z0=st.floats(-0.9, 0.4), c1=st.floats(-1, 1), c2=st.floats(-1, 1), c3=st.floats(-1, 1),
)
def test_solution_mapping_property(z0, c1, c2, c3):
    p, eps = ModelParams(1.0, 0.5), 1e-3
    gc = GroupConstants(epsilon=eps, c1=c1, c2=c2, c3=c3)
    ts = np.linspace(0.0, 2.0, 2001)
    zs = exact_solution(z0, ts, p)
    pts = np.array([forward_transform(t, z, p, gc) for t, z in zip(ts, zs)])
    tb, zb = pts[:, 0], pts[:, 1]
    slope = (zb[2:] - zb[:-2]) / (tb[2:] - tb[:-2])
    resid = np.abs(slope - np.cos(p.theta1 * zb[1:-1] + p.theta2))
    assert resid.max() <= 10 * eps ** 2


def test_literal_transform_breaks_solution_mapping():
    p, eps = ModelParams(1.0, 0.5), 1e-3
    gc = GroupConstants(epsilon=eps, c1=1.0, c3=1.0)
    ts = np.linspace(0.0, 2.0, 2001)
    zs = exact_solution(0.0, ts, p)
    pts = np.array([forward_transform(t, z, p, gc, literal=True) for t, z in zip(ts, zs)])
    slope = np.diff(pts[:, 1]) / np.diff(pts[:, 0])
    resid = np.abs(slope - np.cos(p.theta1 * 0.5 * (pts[1:, 1] + pts[:-1, 1]) + p.theta2))
    assert resid.max() > 10 * eps ** 2


# ---- determining equations --------------------------------------------------

AUDIT_THETAS = [(1.0, 0.0), (1.5, 0.2)]
AUDIT_PHIS = [-1.2, -0.6, 0.0, 0.6, 1.2]
AUDIT_CS = [-2.0, 0.0, 1.0]


@pytest.mark.parametrize("theta", AUDIT_THETAS)
def test_forward_residual_vanishes_on_audit_grid(theta):
    p = ModelParams(*theta)
    worst = 0.0
    for t, phi, (c1, c2, c3) in itertools.product([0.0, 1.0, 5.0], AUDIT_PHIS, itertools.product(AUDIT_CS, repeat=3)):
        z = z_at(phi, p)
        r = determining_residual_forward(t, z, p, GroupConstants(c1=c1, c2=c2, c3=c3))
        oracle = FORWARD_ORACLE(t, z, *theta, c1, c2, c3)
        assert abs(r - oracle) <= 1e-10
        worst = max(worst, abs(r), abs(oracle))
    assert worst <= 1e-10


def test_forward_residual_wrong_candidate():
    p = ModelParams(1.0, 0.0)
    expected = math.cos(0.5) + 0.5 * math.sin(0.5)
    explicit = ForwardInfinitesimals(T=0.0, Z=0.5, T_t=0.0, T_z=0.0, Z_t=0.0, Z_z=1.0)
    assert determining_residual_forward(0.0, 0.5, p, candidate=explicit) == pytest.approx(1.117296, abs=1e-6)
    by_fd = determining_residual_forward(0.0, 0.5, p, candidate=(lambda t, z: 0.0, lambda t, z: z))
    assert by_fd == pytest.approx(expected, abs=1e-8)


def test_forward_residual_trivial_symmetry():
    p = ModelParams(1.3, 0.1)
    r = determining_residual_forward(0.7, 0.2, p, candidate=(lambda t, z: 3.0, lambda t, z: 0.0))
    assert r == 0.0


def _backward_grid(gc):
    for theta in AUDIT_THETAS:
        p = ModelParams(*theta)
        for phi, u, v, w in itertools.product(AUDIT_PHIS, [0.1, 1.0, 10.0], [-1.0, 0.0, 2.0], [-1.0, 0.0, 2.0]):
            yield p, phi, AdjointState(u, v, w, z_at(phi, p))


@pytest.mark.parametrize("gc", [
    GroupConstants(k3=1.0),
    GroupConstants(k2=0.7, k3=-1.3, g_coeffs=(0.4,), h_coeffs=(-2.0,)),
])
def test_exact_subgroup_backward_residuals(gc):
    for p, _, s in _backward_grid(gc):
        r = determining_residuals_backward(s, p, gc)
        assert max(abs(x) for x in r) <= 1e-10
        assert np.allclose(r, backward_residuals(s, p, gc), atol=1e-10)


def test_k4_component_leaves_r4_residual():
    gc = GroupConstants(k4=1.0)
    p = ModelParams(1.0, 0.0)
    r1, _, _, r4 = determining_residuals_backward(AdjointState(1.0, 0.0, 0.0, math.pi / 4), p, gc)
    assert r4 == pytest.approx(2.1213203, abs=1e-7)
    assert abs(r1) <= 1e-12


def test_k4_residuals_match_symbolic_expansion():
    gc = GroupConstants(k4=1.0)
    for p, phi, s in _backward_grid(gc):
        r = determining_residuals_backward(s, p, gc)
        oracle = backward_residuals(s, p, gc)
        scale = 1 + max(abs(x) for x in oracle)
        assert max(abs(a - b) for a, b in zip(r, oracle)) <= 1e-10 * scale
        closed = p.theta1 * gc.k4 * (1 + math.sin(phi) ** 2) / math.cos(phi)
        assert abs(r[3] - closed) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(
    u=st.floats(0.1, 10.0), v=st.floats(-3, 3), w=st.floats(-3, 3), phi=st.floats(-1.3, 1.3),
    th1=st.floats(0.3, 2.0), th2=st.floats(-0.5, 0.5),
    k=st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2)),
    g=st.lists(st.floats(-2, 2), min_size=1, max_size=3),
    h=st.lists(st.floats(-2, 2), min_size=1, max_size=3),
)
def test_backward_residuals_match_symbolic_oracle(u, v, w, phi, th1, th2, k, g, h):
    p = ModelParams(th1, th2)
    gc = GroupConstants(k2=k[0], k3=k[1], k4=k[2], g_coeffs=tuple(g), h_coeffs=tuple(h))
    s = AdjointState(u, v, w, z_at(phi, p))
    r = determining_residuals_backward(s, p, gc)
    oracle = backward_residuals(s, p, gc)
    scale = 1 + max(abs(x) for x in oracle)
    assert max(abs(a - b) for a, b in zip(r, oracle)) <= 1e-10 * scale


# ---- epsilon scaling --------------------------------------------------------

GRID = np.linspace(-1.0, 1.0, 21).tolist()


def test_scaling_slope_forward():
    audit = epsilon_scaling_audit(ModelParams(1, 0), GroupConstants(c1=1), [1e-2, 5e-3, 2.5e-3], GRID)
    assert 1.9 <= audit.slope <= 2.1
    assert all(3.5 <= r <= 4.5 for r in audit.ratios)


def test_scaling_identity_group():
    audit = epsilon_scaling_audit(ModelParams(1, 0), GroupConstants(), [1e-2, 5e-3, 2.5e-3], GRID)
    assert all(m <= 1e-14 for _, m in audit.rows)
    assert math.isnan(audit.slope)


def test_scaling_rejects_bad_eps_list():
    with pytest.raises(ValueError):
        epsilon_scaling_audit(ModelParams(1, 0), GroupConstants(c1=1), [1e-3, 1e-2], GRID)
