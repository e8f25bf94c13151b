"""Limit-cycle shooting, Floquet analysis, and stability classification."""

import numpy as np
import pytest
import scipy.linalg

from torusavg.cycles import (
    LimitCycle,
    classify_stability,
    find_cycle,
    floquet_log,
    liouville_det,
)
from torusavg.errors import SolverError
from torusavg.system import AutonomousField


def planar_field():
    # radial contraction onto the unit circle with unit angular speed
    return AutonomousField(
        ["x1*(1 - x1^2 - x2^2) - x2", "x2*(1 - x1^2 - x2^2) + x1"],
        name="planar-hopf",
    )


def make_cycle(multipliers, period=2 * np.pi):
    mults = np.asarray(multipliers, dtype=complex)
    monodromy = np.diag(mults.real) if np.all(mults.imag == 0) else np.diag(mults)
    trivial = int(np.argmin(np.abs(mults - 1.0)))
    nontrivial = np.delete(np.arange(mults.size), trivial)
    k = int(np.sum(np.abs(mults[nontrivial]) < 1.0))
    on_circle = np.abs(np.abs(mults) - 1.0) <= 1e-4
    return LimitCycle(
        anchor=np.zeros(mults.size),
        period=period,
        monodromy=monodromy,
        multipliers=mults,
        trivial_index=trivial,
        k=k,
        hyperbolic=bool(on_circle[trivial]) and int(np.sum(on_circle)) == 1,
        residual=0.0,
        det=float(np.prod(mults).real),
    )


def test_planar_cycle():
    g = planar_field()
    cyc = find_cycle(g, [1.1, 0.1], 6.0)
    assert abs(cyc.period - 2 * np.pi) < 1e-8
    assert abs(np.hypot(*cyc.anchor) - 1.0) < 1e-9
    assert cyc.residual < 1e-9
    assert cyc.hyperbolic
    nontrivial = np.delete(cyc.multipliers, cyc.trivial_index)
    assert abs(nontrivial[0].real - np.exp(-4 * np.pi)) < 1e-5 * np.exp(-4 * np.pi)
    assert classify_stability(cyc) == {"k": 1, "attracting": True, "unstable_directions": 0}


def test_trivial_multiplier_direction():
    g = planar_field()
    cyc = find_cycle(g, [1.1, 0.1], 6.0)
    lam = cyc.multipliers[cyc.trivial_index]
    assert abs(lam - 1.0) < 1e-5
    w, v = np.linalg.eig(cyc.monodromy)
    idx = int(np.argmin(np.abs(w - 1.0)))
    direction = np.real(v[:, idx])
    field_dir = np.asarray(g(0.0, cyc.anchor))
    cosang = abs(direction @ field_dir) / (
        np.linalg.norm(direction) * np.linalg.norm(field_dir)
    )
    assert np.arccos(min(cosang, 1.0)) < 1e-4


def test_determinant_against_liouville():
    g = planar_field()
    cyc = find_cycle(g, [1.1, 0.1], 6.0)
    det_l = liouville_det(g, cyc)
    assert abs(cyc.det - det_l) <= 1e-5 * abs(det_l)
    assert abs(np.linalg.det(cyc.monodromy) - det_l) <= 1e-5 * abs(det_l)


def test_divergence_free_field_has_unit_determinant():
    # rigid rotation: volume preserving, det of any period map is 1
    g = AutonomousField(["-x2", "x1"])
    cyc = LimitCycle(
        anchor=np.array([1.0, 0.0]), period=2 * np.pi,
        monodromy=np.eye(2), multipliers=np.ones(2, dtype=complex),
        trivial_index=0, k=0, hyperbolic=False, residual=0.0, det=1.0,
    )
    assert liouville_det(g, cyc) == pytest.approx(1.0, abs=1e-12)


def test_newton_rejects_equilibrium_guess():
    g = planar_field()
    with pytest.raises(SolverError):
        find_cycle(g, [0.0, 0.0], 6.0)


def test_no_cycle_system_fails():
    g = AutonomousField(["x1", "x2"])  # pure expansion, no periodic orbit
    with pytest.raises(SolverError):
        find_cycle(g, [1.0, 0.5], 5.0)


def test_floquet_log_positive_spectrum():
    omega = 2 * np.pi
    lam = np.exp(-4 * np.pi)
    cyc = make_cycle([1.0, lam, lam], period=omega)
    fl = floquet_log(cyc)
    assert not fl.doubled
    assert np.allclose(fl.B, np.diag([0.0, -4 * np.pi / omega, -4 * np.pi / omega]), atol=1e-9)


def test_floquet_log_identity():
    cyc = make_cycle([1.0, 1.0])
    fl = floquet_log(cyc)
    assert not fl.doubled
    assert np.allclose(fl.B, 0.0, atol=1e-12)


def test_floquet_log_single_negative_eigenvalue_doubles():
    omega = 2 * np.pi
    cyc = make_cycle([1.0, -np.exp(-4 * np.pi), 0.5], period=omega)
    fl = floquet_log(cyc)
    assert fl.doubled
    M2 = cyc.monodromy @ cyc.monodromy
    defect = np.linalg.norm(scipy.linalg.expm(2 * omega * fl.B) - M2)
    assert defect <= 1e-6 * np.linalg.norm(M2)


def test_floquet_log_paired_negatives_do_not_double():
    # equal negative multipliers span a plane where the map is a scaled
    # half-turn, whose generator is real: no period doubling required
    lam = -np.exp(-2.0)
    cyc = make_cycle([1.0, lam, lam])
    fl = floquet_log(cyc)
    assert not fl.doubled
    M = cyc.monodromy
    defect = np.linalg.norm(scipy.linalg.expm(cyc.period * fl.B) - M)
    assert defect <= 1e-6 * np.linalg.norm(M)


def test_floquet_log_complex_multipliers():
    # complex conjugate pair: principal log is already real
    lam = 0.3 * np.exp(1j * 0.7)
    mults = np.array([1.0, lam, np.conj(lam)])
    M = np.eye(3)
    M[1:, 1:] = np.abs(lam) * np.array(
        [[np.cos(0.7), -np.sin(0.7)], [np.sin(0.7), np.cos(0.7)]]
    )
    cyc = make_cycle([1.0, 0.3, 0.3])
    cyc.monodromy = M
    cyc.multipliers = mults
    fl = floquet_log(cyc)
    assert not fl.doubled
    defect = np.linalg.norm(scipy.linalg.expm(cyc.period * fl.B) - M)
    assert defect <= 1e-8 * np.linalg.norm(M)


def test_classify_stability_cases():
    lam = np.exp(-4 * np.pi)
    attracting = make_cycle([1.0, lam, lam])
    assert classify_stability(attracting) == {
        "k": 2, "attracting": True, "unstable_directions": 0
    }
    saddle = make_cycle([1.0, lam, 1.0 / lam])
    assert classify_stability(saddle) == {
        "k": 1, "attracting": False, "unstable_directions": 1
    }
    repelling = make_cycle([1.0, 1.0 / lam, 1.0 / lam])
    assert classify_stability(repelling) == {
        "k": 0, "attracting": False, "unstable_directions": 2
    }


def test_classify_requires_hyperbolic():
    cyc = make_cycle([1.0, 1.0, 0.5])  # two multipliers on the circle
    assert not cyc.hyperbolic
    with pytest.raises(ValueError):
        classify_stability(cyc)
