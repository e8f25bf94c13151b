"""Shared synthetic systems and oracles for the test suite."""

import numpy as np

from torusavg.system import system_from_strings

# 2D trig-polynomial system with nonzero Melnikov functions at orders 1..3;
# coefficients fixed once from a seeded draw
SYNTH2D_ORDERS = {
    1: ["0.7*sin(t)*x2 + 0.3*cos(t)", "0.5*cos(t)*x1*x2 + 0.2*sin(t)^2"],
    2: ["0.4*sin(t)*x1^2 - 0.2*cos(2*t)*x2", "0.6*sin(t)*x2^2 + 0.1*sin(t)"],
    3: ["0.25*cos(t)*x1*x2 + 0.5*sin(2*t)*x1", "0.15*cos(t)^2*x1 - 0.35*cos(t)*x1^3"],
}


def synth2d():
    return system_from_strings(2, "2*pi", 3, SYNTH2D_ORDERS, name="synth2d")


# 2D system whose first-order average is a rigid rotation; used for the
# full-vs-averaged closeness sweeps
def rotator2d():
    return system_from_strings(
        2, "2*pi", 1,
        {1: ["-x2 + cos(t)", "x1 + sin(t)*x1"]},
        name="rotator2d",
    )


def synth2d_points(count=20, seed=123):
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.8, 0.8, size=(count, 2))
