"""Invariant tori of periodically perturbed ODEs via higher order averaging.

The toolkit computes Melnikov/averaged functions of arbitrary order through
the partial-Bell-polynomial recursion, locates hyperbolic limit cycles of the
guiding (averaged) system with full Floquet analysis, and verifies torus
existence, convergence, stability, and rotation-number asymptotics by direct
Poincare-map simulation.
"""

from torusavg.bell import BellTable, EpsJet, bell_eval, jet_extract, jet_mul
from torusavg.expr import diff_expr, eval_expr, parse_expr, pretty
from torusavg.system import AutonomousField, SystemSpec, derivative_tensor, load_system
from torusavg.integrate import IntegratorConfig, flow, flow_jet, flow_variational
from torusavg.quadrature import QuadratureConfig, adaptive_quadrature
from torusavg.melnikov import (
    MelnikovEvaluator,
    MelnikovFunction,
    averaged_g,
    melnikov_f,
    melnikov_f_via_jet,
    melnikov_y,
)
from torusavg.cycles import (
    FloquetLog,
    LimitCycle,
    classify_stability,
    find_cycle,
    floquet_log,
    liouville_det,
)
from torusavg.torus import (
    RotationEstimate,
    TorusEstimate,
    averaging_closeness,
    detect_torus,
    fit_invariant_curve,
    hausdorff_distance,
    poincare_iterate,
    rotation_number,
    stability_probe,
)

__all__ = [
    "AutonomousField",
    "BellTable",
    "EpsJet",
    "FloquetLog",
    "IntegratorConfig",
    "LimitCycle",
    "MelnikovEvaluator",
    "MelnikovFunction",
    "QuadratureConfig",
    "RotationEstimate",
    "SystemSpec",
    "TorusEstimate",
    "adaptive_quadrature",
    "averaged_g",
    "averaging_closeness",
    "bell_eval",
    "classify_stability",
    "derivative_tensor",
    "detect_torus",
    "diff_expr",
    "eval_expr",
    "find_cycle",
    "fit_invariant_curve",
    "floquet_log",
    "flow",
    "flow_jet",
    "flow_variational",
    "hausdorff_distance",
    "jet_extract",
    "jet_mul",
    "liouville_det",
    "load_system",
    "melnikov_f",
    "melnikov_f_via_jet",
    "melnikov_y",
    "parse_expr",
    "poincare_iterate",
    "pretty",
    "rotation_number",
    "stability_probe",
]

__version__ = "0.1.0"
