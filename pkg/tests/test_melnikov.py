"""Melnikov recursion vs direct quadrature and the time-T-map jet."""

import numpy as np
import pytest

from torusavg.errors import HypothesisError
from torusavg.melnikov import (
    AveragedField,
    MelnikovEvaluator,
    averaged_g,
    melnikov_f,
    melnikov_f_via_jet,
    melnikov_y,
    sample_box,
)
from torusavg.quadrature import adaptive_quadrature
from torusavg.system import system_from_strings

from helpers import synth2d, synth2d_points


def test_y1_full_period_sine_vanishes():
    spec = system_from_strings(2, "2*pi", 1, {1: ["sin(t)", "0"]})
    y = melnikov_y(spec, 1, 2 * np.pi, [0.0, 0.0])
    assert np.allclose(y, 0.0, atol=1e-12)


def test_y1_sine_squared():
    spec = system_from_strings(2, "2*pi", 1, {1: ["sin(t)^2", "0"]})
    y = melnikov_y(spec, 1, 2 * np.pi, [0.0, 0.0])
    assert y == pytest.approx([np.pi, 0.0], abs=1e-10)


def test_f1_equals_direct_quadrature():
    spec = synth2d()
    z = np.array([0.4, -0.3])
    f1 = melnikov_f(spec, 1, z)
    direct, _ = adaptive_quadrature(lambda s: spec.field_order(1, s, z), 0.0, spec.T)
    assert np.allclose(f1, direct, atol=1e-10)


def test_f0_is_zero():
    spec = synth2d()
    assert np.all(melnikov_f(spec, 0, [0.1, 0.1]) == 0.0)


def test_scaling_covariance_of_f1():
    base = system_from_strings(1, "2*pi", 1, {1: ["sin(t)^2*x1 + cos(t)^2"]})
    scaled = system_from_strings(1, "2*pi", 1, {1: ["3*(sin(t)^2*x1 + cos(t)^2)"]})
    z = [0.7]
    a = melnikov_f(base, 1, z)
    b = melnikov_f(scaled, 1, z)
    assert b == pytest.approx(3.0 * a, rel=1e-13)


def test_linear_first_order_jet_identity():
    # dz/dt = eps z with T=1: f_1(1) = 1
    spec = system_from_strings(1, 1.0, 1, {1: ["x1"]})
    assert melnikov_f(spec, 1, [1.0]) == pytest.approx([1.0], rel=1e-10)
    assert melnikov_f_via_jet(spec, 1, [1.0]) == pytest.approx([1.0], rel=1e-9)


def test_recursion_matches_jet_on_synthetic_system():
    spec = synth2d()
    for z in synth2d_points(count=4, seed=5):
        ev = MelnikovEvaluator(spec, z)
        for order in (1, 2, 3):
            f_rec = melnikov_f(spec, order, z, evaluator=ev)
            f_jet = melnikov_f_via_jet(spec, order, z)
            scale = np.maximum(np.abs(f_jet), 1e-8 / 1e-5)
            assert np.all(np.abs(f_rec - f_jet) <= 1e-5 * scale), (order, z, f_rec, f_jet)


def test_averaged_g_first_order_always_admissible():
    spec = synth2d()
    z = [0.2, 0.1]
    g1 = averaged_g(spec, 1, z)
    assert np.allclose(g1, melnikov_f(spec, 1, z) / spec.T)


def test_averaged_g_requires_vanishing_lower_orders():
    spec = synth2d()  # f_1 != 0
    with pytest.raises(HypothesisError):
        averaged_g(spec, 2, [0.2, 0.1], box=[(-0.5, 0.5)] * 2)


def test_averaged_g_accepts_vanishing_lower_orders():
    # F_1 has zero average in t, so f_1 = 0 identically and g_2 = f_2 / T
    spec = system_from_strings(
        1, "2*pi", 2, {1: ["sin(t)*x1"], 2: ["cos(t)^2*x1"]}
    )
    z = [0.8]
    g2 = averaged_g(spec, 2, z, box=[(-1.0, 1.0)])
    f2 = melnikov_f(spec, 2, z)
    assert np.allclose(g2, f2 / spec.T)
    fld = AveragedField(spec, 2, box=[(-1.0, 1.0)])
    assert np.allclose(fld(0.0, z), g2)


def test_sample_box_product_and_scatter():
    pts = sample_box([(0.0, 1.0)], per_dim=5)
    assert pts.shape == (5, 1)
    pts = sample_box([(0.0, 1.0)] * 3, per_dim=32, cap=100)
    assert pts.shape == (100, 3)
    assert np.all(pts >= 0.0) and np.all(pts <= 1.0)


def test_melnikov_function_value_type():
    from torusavg.melnikov import MelnikovFunction

    spec = synth2d()
    f2 = MelnikovFunction(spec, 2)
    z = [0.3, -0.1]
    assert np.allclose(f2(z), melnikov_f(spec, 2, z))
    assert f2.T == spec.T
    # f_1 of this system does not vanish, f_0 is identically zero
    assert f2.vanishing_flags(box=[(-0.5, 0.5)] * 2) == [False]
    f0 = MelnikovFunction(spec, 0)
    assert np.all(f0(z) == 0.0)
    with pytest.raises(HypothesisError):
        f2.averaged(z, box=[(-0.5, 0.5)] * 2)


def test_shared_evaluator_memoizes_lower_orders():
    spec = synth2d()
    z = [0.3, -0.2]
    ev = MelnikovEvaluator(spec, z)
    ev.f(3)
    assert len(ev._grid[1]) > 10  # lower-order values were cached
    count = len(ev._grid[1])
    ev.f(3)  # repeat is a pure cache hit
    assert len(ev._grid[1]) == count
