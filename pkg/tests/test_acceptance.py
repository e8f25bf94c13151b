"""Acceptance criteria: one test per criterion, each printing a verdict line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; the suite totals a few minutes, dominated by the small-eps transients
of the parameter sweep.
"""

import time

import numpy as np
import pytest

from torusavg.bell import bell_eval
from torusavg.cycles import find_cycle, liouville_det
from torusavg.example4d import (
    CylindricalReturnMap,
    Example4DConfig,
    cylindrical_spec,
    guiding_field,
    melnikov_closed_form,
    reproduce_fig1,
)
from torusavg.experiments import probe_example4d, rotation_scaling_fit, torus_sweep
from torusavg.melnikov import MelnikovEvaluator, melnikov_f_via_jet
from torusavg.torus import CallableMap, averaging_closeness, detect_torus, rotation_number

from helpers import rotator2d, synth2d, synth2d_points
from test_bell import bell_by_partitions

BIG_N = 2
SWEEP_GRID = (1 / 60, 1 / 38, 1 / 30, 1 / 24, 1 / 15)
SCALING_GRID = (1 / 60, 1 / 38, 1 / 24, 1 / 15)


def verdict(num, name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"criterion {num:02d} [{status}] {name}: {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


@pytest.fixture(scope="module")
def guiding_cycles():
    out = {}
    t0 = time.monotonic()
    for mu in (1, -1):
        g = guiding_field(Example4DConfig(mu=mu))
        out[mu] = (find_cycle(g, [1.03, 0.97, 0.05], 76.0), g)
    out["elapsed"] = time.monotonic() - t0
    return out


@pytest.fixture(scope="module")
def cylinder_points():
    rng = np.random.default_rng(20240815)
    pts = np.stack(
        [
            rng.uniform(0.5, 1.5, size=20),
            rng.uniform(-1.0, 1.0, size=20),
            rng.uniform(-1.0, 1.0, size=20),
        ],
        axis=-1,
    )
    cfg = Example4DConfig()
    spec = cylindrical_spec(cfg)
    evaluators = [MelnikovEvaluator(spec, z) for z in pts]
    return cfg, spec, pts, evaluators


@pytest.fixture(scope="module")
def sweep_rows():
    return torus_sweep(Example4DConfig(), SWEEP_GRID)


def test_criterion_01_bell_partition_oracle():
    t0 = time.monotonic()
    rng = np.random.default_rng(1)
    checked = 0
    worst = True
    while checked < 50:
        n = int(rng.integers(1, 9))
        k = int(rng.integers(1, n + 1))
        x = [int(v) for v in rng.integers(-3, 4, size=n - k + 1)]
        if bell_eval(n, k, x) != bell_by_partitions(n, k, x):
            worst = False
            break
        checked += 1
    elapsed = time.monotonic() - t0
    verdict(
        1, "Bell vs set-partition enumeration",
        worst and elapsed < 1.0,
        f"{checked} random tuples exact, {elapsed:.2f}s (< 1s)",
    )


def test_criterion_02_guiding_cycle(guiding_cycles):
    omega_want = 8 * np.pi ** 2
    ok = guiding_cycles["elapsed"] < 10.0
    details = [f"{guiding_cycles['elapsed']:.1f}s (< 10s)"]
    for mu in (1, -1):
        cyc, _ = guiding_cycles[mu]
        omega_err = abs(cyc.period - omega_want) / omega_want
        r_err = abs(cyc.anchor[0] - 1.0)
        wanted = sorted([np.exp(-4 * np.pi), np.exp(-4 * np.pi * mu)])
        mults = sorted(np.abs(np.delete(cyc.multipliers, cyc.trivial_index)))
        m_err = max(abs(m - w) / w for m, w in zip(mults, wanted))
        ok = ok and omega_err <= 1e-6 and r_err <= 1e-8 and m_err <= 1e-5 and cyc.hyperbolic
        details.append(f"mu={mu:+d}: omega rel {omega_err:.1e}, |r-1| {r_err:.1e}, "
                       f"multipliers rel {m_err:.1e}")
    verdict(2, "guiding-system limit cycle", ok, "; ".join(details))


def test_criterion_03_liouville_crosscheck(guiding_cycles):
    ok = True
    details = []
    for mu in (1, -1):
        cyc, g = guiding_cycles[mu]
        want = np.exp(-4 * np.pi * (1 + mu))
        det_err = abs(cyc.det - want) / want
        cross = abs(cyc.det - liouville_det(g, cyc)) / want
        ok = ok and det_err <= 1e-5 and cross <= 1e-5
        details.append(f"mu={mu:+d}: det rel {det_err:.1e}, liouville cross {cross:.1e}")
    verdict(3, "monodromy determinant vs divergence integral", ok, "; ".join(details))


def test_criterion_04_melnikov_vanishes_at_order_n(cylinder_points):
    cfg, spec, pts, evaluators = cylinder_points
    worst = max(float(np.max(np.abs(ev.f(cfg.big_n)))) for ev in evaluators)
    verdict(4, "order-N function vanishes", worst <= 1e-8,
            f"max |f_N| = {worst:.2e} over 20 points (<= 1e-8)")


def test_criterion_05_melnikov_closed_form(cylinder_points):
    cfg, spec, pts, evaluators = cylinder_points
    worst = 0.0
    for z, ev in zip(pts, evaluators):
        got = ev.f(cfg.big_n + 1)
        want = melnikov_closed_form(cfg, cfg.big_n + 1, z)
        scale = np.maximum(np.abs(want), 1e-12)
        worst = max(worst, float(np.max(np.abs(got - want) / scale)))
    verdict(5, "order-(N+1) function matches closed form", worst <= 1e-6,
            f"max rel dev = {worst:.2e} over 20 points (<= 1e-6)")


def test_criterion_06_jet_oracle_equivalence():
    t0 = time.monotonic()
    spec = synth2d()
    worst = 0.0
    for z in synth2d_points(20):
        ev = MelnikovEvaluator(spec, z)
        for order in (1, 2, 3):
            f_rec = ev.f(order)
            f_jet = melnikov_f_via_jet(spec, order, z)
            scale = np.maximum(np.abs(f_jet), 1e-8 / 1e-5)
            worst = max(worst, float(np.max(np.abs(f_rec - f_jet) / scale)))
    elapsed = time.monotonic() - t0
    verdict(6, "recursion vs time-T-map jet", worst <= 1e-5 and elapsed < 60.0,
            f"max rel dev {worst:.2e} (<= 1e-5), {elapsed:.1f}s (< 60s)")


def test_criterion_07_long_section_run(tmp_path):
    t0 = time.monotonic()
    v = reproduce_fig1(tmp_path / "fig1")
    elapsed = time.monotonic() - t0
    ok = (
        v["bounded"] and v["residual"] <= 0.05 and v["hausdorff_uv"] <= 0.2
        and v["hausdorff_x"] <= 0.2 and elapsed < 300.0
    )
    verdict(7, "four-seed 10345-iterate reproduction", ok,
            f"bounded, tube {v['residual']:.3f} (<= 0.05), "
            f"uv-Hausdorff {v['hausdorff_uv']:.3f} (<= 0.2), "
            f"x-range {v['hausdorff_x']:.3f} (<= 0.2), {elapsed:.0f}s (< 300s)")


def test_criterion_08_convergence_trend(sweep_rows):
    subset = [r for r in sweep_rows if r["eps"] in (1 / 60, 1 / 30, 1 / 15)]
    subset.sort(key=lambda r: r["eps"])
    dists = [r["distance"] for r in subset]
    ok = all(a < b for a, b in zip(dists, dists[1:]))
    verdict(8, "curve-to-cycle distance decreases with eps", ok,
            "distances " + " < ".join(f"{d:.3e}" for d in dists))


def test_criterion_09_rotation_scaling(sweep_rows):
    rows = [r for r in sweep_rows if r["eps"] in SCALING_GRID]
    fit = rotation_scaling_fit(rows)
    slope_ok = abs(fit["slope"] - (BIG_N + 1)) <= 0.2
    ok = slope_ok and fit["enclosed"]
    verdict(9, "rotation-number scaling", ok,
            f"slope {fit['slope']:.4f} (want {BIG_N + 1} +- 0.2), "
            f"error bars enclose fit: {fit['enclosed']}")


def test_rotation_number_vanishes_toward_zero(sweep_rows):
    # continuity-at-zero surrogate: rho decreases monotonically along the
    # grid toward eps -> 0 (not a numbered criterion, an invariant)
    rows = sorted(sweep_rows, key=lambda r: r["eps"])
    rhos = [r["rho"] for r in rows]
    assert all(a < b for a, b in zip(rhos, rhos[1:]))
    assert rhos[0] < 1e-5
    # the leading constant: rho = eps^(N+1)/2 + O(eps^(N+2)) revolutions per
    # return for this system (eps^l T/omega with the true averaged period)
    for r in rows:
        assert abs(r["rho"] / (r["eps"] ** (BIG_N + 1) / 2.0) - 1.0) <= 0.02


def test_criterion_10_stability_dichotomy():
    rep1, _ = probe_example4d(1, trials=200, radius=0.1, horizon=4000, seed=0)
    rep2, _ = probe_example4d(-1, trials=200, radius=0.1, horizon=4000, seed=0)
    ok = (
        rep1["classification"] == "attracting"
        and rep1["fraction_attracted"] >= 0.95
        and rep2["fraction_escaped"] >= 0.05
    )
    verdict(10, "stability probe dichotomy", ok,
            f"mu=+1 attracted {rep1['fraction_attracted']:.2f} (>= 0.95); "
            f"mu=-1 escaped {rep2['fraction_escaped']:.2f} (>= 0.05, "
            f"classified {rep2['classification']})")


def test_criterion_11_averaging_closeness():
    spec = rotator2d()
    eps_list = [0.1, 0.05, 0.025, 0.0125]
    rows = averaging_closeness(spec, 1, [0.6, 0.0], eps_list, box=[(-1.2, 1.2)] * 2)
    devs = [r["deviation"] for r in rows]
    ratios = [b / a for a, b in zip(devs, devs[1:])]
    ok = all(0.3 <= r <= 0.7 for r in ratios)
    verdict(11, "full-vs-averaged deviation halves with eps", ok,
            "ratios " + ", ".join(f"{r:.3f}" for r in ratios) + " (all in [0.3, 0.7])")


def test_criterion_12_synthetic_ground_truth():
    alpha = 0.1234

    def fn(pts):
        x, y = pts[:, 0], pts[:, 1]
        r = np.hypot(x, y)
        th = np.arctan2(y, x) + 2 * np.pi * alpha
        rn = 1.0 + 0.5 * (r - 1.0)
        return np.stack([rn * np.cos(th), rn * np.sin(th)], axis=-1)

    m = CallableMap(fn, 2)
    ang = 2 * np.pi * np.arange(8) / 8
    seeds = np.stack([1.2 * np.cos(ang), 1.2 * np.sin(ang)], axis=-1)
    est = detect_torus(m, seeds, transient=100, keep=400)
    rho = rotation_number(m, est, iterates=1200)
    ok = est.invariance_residual <= 1e-8 and abs(rho.value - alpha) <= 1e-6
    verdict(12, "exact-circle map ground truth", ok,
            f"invariance residual {est.invariance_residual:.2e} (<= 1e-8), "
            f"rotation error {abs(rho.value - alpha):.2e} (<= 1e-6)")
