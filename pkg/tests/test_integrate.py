"""Flows, variational flows, parameter-jet flows, and quadrature."""

import numpy as np
import pytest

from torusavg.bell import jet_extract
from torusavg.errors import BlowupError, SolverError
from torusavg.integrate import (
    CallableField,
    IntegratorConfig,
    flow,
    flow_jet,
    flow_variational,
)
from torusavg.quadrature import QuadratureConfig, adaptive_quadrature
from torusavg.system import system_from_strings

TIGHT = IntegratorConfig(method="rk45", abs_tol=1e-12, rel_tol=1e-12)


def expm_taylor_ss(A, terms=30):
    """Independent matrix exponential: scaling and squaring with a Taylor
    series, used only as an oracle."""
    A = np.asarray(A, dtype=float)
    norm = np.linalg.norm(A, 1)
    s = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0 else 0
    B = A / 2 ** s
    X = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms + 1):
        term = term @ B / k
        X = X + term
    for _ in range(s):
        X = X @ X
    return X


def test_flow_constant_field():
    z = flow(lambda t, y: np.zeros(3), 0.0, 5.0, [1.0, -2.0, 0.5])
    assert z == pytest.approx([1.0, -2.0, 0.5])


def test_flow_exponential():
    z = flow(lambda t, y: y, 0.0, 1.0, [1.0], TIGHT)
    assert abs(z[0] - np.e) < 1e-9


def test_flow_backward():
    z = flow(lambda t, y: y, 1.0, 0.0, [np.e], TIGHT)
    assert abs(z[0] - 1.0) < 1e-9


def test_flow_rotation():
    field = lambda t, y: np.array([-y[1], y[0]])
    z = flow(field, 0.0, np.pi / 2, [1.0, 0.0], TIGHT)
    assert np.allclose(z, [0.0, 1.0], atol=1e-9)


def test_flow_group_property():
    field = lambda t, y: np.array([np.sin(t) * y[1], -y[0] + 0.1 * np.cos(t)])
    z0 = np.array([0.3, -0.7])
    mid = flow(field, 0.0, 1.3, z0, TIGHT)
    end_via_mid = flow(field, 1.3, 2.9, mid, TIGHT)
    end = flow(field, 0.0, 2.9, z0, TIGHT)
    assert np.allclose(end_via_mid, end, atol=1e-11)


def test_flow_backward_forward_roundtrip():
    field = lambda t, y: np.array([y[1], -np.sin(y[0])])
    z0 = np.array([0.5, 0.1])
    fwd = flow(field, 0.0, 4.0, z0, TIGHT)
    back = flow(field, 4.0, 0.0, fwd, TIGHT)
    assert np.allclose(back, z0, atol=1e-10)


def test_flow_rk4_fixed_step():
    cfg = IntegratorConfig(method="rk4", step=1e-3)
    z = flow(lambda t, y: y, 0.0, 1.0, [1.0], cfg)
    assert abs(z[0] - np.e) < 1e-10


def test_flow_blowup_detected():
    with pytest.raises(BlowupError):
        flow(lambda t, y: y * y, 0.0, 2.0, [1.0], IntegratorConfig(abs_tol=1e-8, rel_tol=1e-8))


def test_flow_max_steps():
    cfg = IntegratorConfig(method="rk45", max_steps=10)
    with pytest.raises(SolverError):
        flow(lambda t, y: np.array([np.cos(50 * t) * y[0] + 1]), 0.0, 100.0, [1.0], cfg)


def test_variational_identity_for_constant_field():
    field = CallableField(lambda t, y: np.zeros(2), lambda t, y: np.zeros((2, 2)))
    out = flow_variational(field, 0.0, 3.0, [1.0, 2.0], TIGHT)
    assert np.allclose(out.psi, np.eye(2), atol=1e-12)


def test_variational_linear_matches_expm_oracle():
    rng = np.random.default_rng(3)
    for _ in range(5):
        A = rng.uniform(-1, 1, size=(3, 3))
        s = 0.8
        field = CallableField(lambda t, y, A=A: A @ y, lambda t, y, A=A: A)
        out = flow_variational(field, 0.0, s, np.zeros(3), TIGHT)
        assert np.allclose(out.psi, expm_taylor_ss(A * s), atol=1e-9)


def test_variational_scalar_contraction():
    # dz/dt = -2 z over one full angular period: multiplier e^{-4 pi}
    field = CallableField(lambda t, y: -2.0 * y, lambda t, y: np.array([[-2.0]]))
    out = flow_variational(field, 0.0, 2 * np.pi, [1.0], TIGHT)
    assert out.psi[0, 0] == pytest.approx(np.exp(-4 * np.pi), rel=1e-9)


def test_jet_linear_growth_closed_form():
    # dz/dt = eps z: jet of z(T) is z0 (1 + T eps + T^2 eps^2/2)
    spec = system_from_strings(1, 1.0, 2, {1: ["x1"]})
    jet = flow_jet(spec, 0.0, 1.0, [1.0], TIGHT)
    assert jet_extract(jet, 0)[0] == pytest.approx(1.0, abs=1e-14)
    assert jet_extract(jet, 1)[0] == pytest.approx(1.0, rel=1e-9)
    assert jet_extract(jet, 2)[0] == pytest.approx(0.5, rel=1e-9)


def test_jet_order_zero_is_unperturbed():
    spec = system_from_strings(2, 2 * np.pi, 2, {1: ["sin(t)*x2", "x1^2"]})
    jet = flow_jet(spec, 0.0, 5.0, [0.3, 0.4], TIGHT)
    assert np.array_equal(jet_extract(jet, 0), [0.3, 0.4])


def test_jet_first_order_is_time_average_integral():
    # F1 = sin(t)^2 z over [0, 2pi]: coefficient of eps is pi z0
    spec = system_from_strings(1, 2 * np.pi, 2, {1: ["sin(t)^2*x1"]})
    jet = flow_jet(spec, 0.0, 2 * np.pi, [2.0], TIGHT)
    assert jet_extract(jet, 1)[0] == pytest.approx(2.0 * np.pi, rel=1e-9)


def test_jet_matches_eps_finite_difference():
    # cross-check the hierarchy against numerically differentiated flows
    spec = system_from_strings(
        2, 2 * np.pi, 2, {1: ["sin(t)*x2 + cos(t)", "x1*x2"], 2: ["x2^2", "cos(t)*x1"]}
    )
    from torusavg.integrate import EpsField

    z0 = np.array([0.5, -0.2])
    jet = flow_jet(spec, 0.0, 2 * np.pi, z0, TIGHT)
    h = 1e-3
    flows = {
        e: flow(EpsField(spec, e), 0.0, 2 * np.pi, z0, TIGHT)
        for e in (-2 * h, -h, h, 2 * h)
    }
    d1 = (flows[-2 * h] - 8 * flows[-h] + 8 * flows[h] - flows[2 * h]) / (12 * h)
    assert np.allclose(jet_extract(jet, 1), d1, atol=1e-8)
    d2 = (-flows[-2 * h] / 12 + 4 * flows[-h] / 3 - 2.5 * z0 + 4 * flows[h] / 3 - flows[2 * h] / 12) / h ** 2
    assert np.allclose(jet_extract(jet, 2), 0.5 * d2, atol=1e-6)


def test_quadrature_scalar_and_vector():
    val, err = adaptive_quadrature(lambda s: np.sin(s) ** 2, 0.0, 2 * np.pi)
    assert val == pytest.approx(np.pi, abs=1e-10)
    assert err < 1e-9

    def vec(s):
        return np.stack([np.sin(s), np.cos(s) ** 2], axis=-1)

    val, _ = adaptive_quadrature(vec, 0.0, 2 * np.pi)
    assert np.allclose(val, [0.0, np.pi], atol=1e-10)


def test_quadrature_orientation_and_empty():
    val, _ = adaptive_quadrature(lambda s: np.ones_like(s), 3.0, 1.0)
    assert val == pytest.approx(-2.0)
    val, err = adaptive_quadrature(lambda s: np.ones_like(s), 1.0, 1.0)
    assert val == 0.0 and err == 0.0


def test_quadrature_panel_budget():
    cfg = QuadratureConfig(abs_tol=1e-13, max_panels=8)
    with pytest.raises(SolverError):
        adaptive_quadrature(lambda s: np.abs(s - np.sqrt(2) / 2) ** 0.1, 0.0, 1.0, cfg)
