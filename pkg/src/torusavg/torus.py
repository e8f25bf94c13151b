"""Invariant-curve detection and dynamics measurements on Poincare sections.

A return map (stroboscopic or section-crossing) is iterated from a fan of
seeds; after a transient the surviving iterates concentrate on the invariant
closed curve, which is fitted by trigonometric least squares in the angle of
the best-fit plane through the point cloud.  The fitted curve provides a
chart: an angular lift for rotation numbers, a distance function for
invariance residuals, convergence measurements against the unperturbed
cycle, and a frame for sampling perturbed initial conditions in stability
probes.

Rotation numbers are Birkhoff averages of the unwrapped angular lift.  The
estimate averages a fan of starting phases spread uniformly around the
curve, which cancels the bounded quasi-periodic part of the lift error to
spectral accuracy; the reported error bar is the spread of windowed slope
estimates and is deliberately conservative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from torusavg import _kernels
from torusavg.errors import BlowupError, GuardError, TorusavgError
from torusavg.integrate import EpsField, IntegratorConfig, flow
from torusavg.melnikov import AveragedField

__all__ = [
    "TorusEstimate",
    "RotationEstimate",
    "DetectionError",
    "CallableMap",
    "StroboscopicMap",
    "poincare_iterate",
    "fit_invariant_curve",
    "detect_torus",
    "rotation_number",
    "stability_probe",
    "averaging_closeness",
    "hausdorff_distance",
]


class DetectionError(TorusavgError):
    """Torus detection failed; carries whatever residuals were measured."""

    def __init__(self, message, fit_residual=None):
        super().__init__(message)
        self.fit_residual = fit_residual


# ---------------------------------------------------------------------------
# return-map protocol implementations


class CallableMap:
    """Adapt a plain function mapping (B, dim) -> (B, dim) (or a single
    point) to the batched return-map protocol used by the detectors."""

    def __init__(self, fn, dim):
        self.fn = fn
        self.dim = dim

    def apply_batch(self, points, count, record=False):
        pts = np.array(points, dtype=float, copy=True)
        status = np.zeros(pts.shape[0], dtype=np.int64)
        orbits = np.full((count if record else 0, pts.shape[0], self.dim), np.nan)
        for it in range(count):
            live = status == _kernels.STATUS_OK
            if np.any(live):
                out = np.asarray(self.fn(pts[live]), dtype=float)
                pts[live] = out
                bad = ~np.all(np.isfinite(out), axis=1) | (
                    np.max(np.abs(out), axis=1) > 1e8
                )
                idx = np.flatnonzero(live)
                status[idx[bad]] = _kernels.STATUS_BLOWUP
                pts[idx[bad]] = np.nan
            if record:
                orbits[it] = np.where(
                    (status == _kernels.STATUS_OK)[:, None], pts, np.nan
                )
        return pts, orbits, status


class StroboscopicMap:
    """Time-T return map of a T-periodic perturbed spec at parameter eps,
    driven by the generic adaptive integrator (reference path; built-in
    systems provide compiled fast paths)."""

    def __init__(self, spec, eps, cfg: IntegratorConfig | None = None):
        self.spec = spec
        self.eps = float(eps)
        self.cfg = cfg or IntegratorConfig(abs_tol=1e-11, rel_tol=1e-11)
        self.field = EpsField(spec, eps)
        self.dim = spec.n

    def apply_batch(self, points, count, record=False):
        pts = np.array(points, dtype=float, copy=True)
        status = np.zeros(pts.shape[0], dtype=np.int64)
        orbits = np.full((count if record else 0, pts.shape[0], self.dim), np.nan)
        for it in range(count):
            for lane in range(pts.shape[0]):
                if status[lane] != _kernels.STATUS_OK:
                    continue
                try:
                    pts[lane] = flow(self.field, 0.0, self.spec.T, pts[lane], self.cfg)
                except BlowupError:
                    status[lane] = _kernels.STATUS_BLOWUP
                    pts[lane] = np.nan
            if record:
                orbits[it] = np.where(
                    (status == _kernels.STATUS_OK)[:, None], pts, np.nan
                )
        return pts, orbits, status


def poincare_iterate(section_map, x0, count):
    """Successive first returns from a single start point; shape (count, dim).

    Raises BlowupError (with the failing iterate index) if the trajectory
    escapes, and GuardError if the map's validity guard trips.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    pts = np.asarray(x0, dtype=float)[None, :]
    _, orbits, status = section_map.apply_batch(pts, count, record=True)
    code = int(status[0])
    if code != _kernels.STATUS_OK:
        n_ok = int(np.sum(np.all(np.isfinite(orbits[:, 0, :]), axis=1)))
        if code == _kernels.STATUS_GUARD:
            raise GuardError(f"validity guard tripped at iterate {n_ok}")
        raise BlowupError(f"trajectory blow-up at iterate {n_ok}", iterate=n_ok)
    return orbits[:, 0, :]


# ---------------------------------------------------------------------------
# invariant curve fit


@dataclass
class TorusEstimate:
    """A fitted invariant closed curve on the section, with its chart."""

    eps: float
    centroid: np.ndarray          # chart origin
    basis: np.ndarray             # (2, dim): plane spanned by the curve
    coeffs: np.ndarray            # (dim, 1 + 2H) Fourier coefficients
    harmonics: int
    fit_residual: float           # p95 distance of pooled iterates to curve
    invariance_residual: float
    iterates_used: int
    distance_to_unperturbed: float | None = None
    rotation_number: float | None = None
    seeds_survived: int = 0

    def _design(self, phi_rad):
        cols = [np.ones_like(phi_rad)]
        for h in range(1, self.harmonics + 1):
            cols.append(np.cos(h * phi_rad))
            cols.append(np.sin(h * phi_rad))
        return np.stack(cols, axis=-1)

    def curve(self, phi):
        """Points on the fitted curve at angles `phi` in revolutions."""
        phi_rad = 2 * np.pi * np.asarray(phi, dtype=float)
        return self._design(phi_rad) @ self.coeffs.T

    def curve_velocity(self, phi):
        phi_rad = 2 * np.pi * np.asarray(phi, dtype=float)
        cols = [np.zeros_like(phi_rad)]
        for h in range(1, self.harmonics + 1):
            cols.append(-h * np.sin(h * phi_rad))
            cols.append(h * np.cos(h * phi_rad))
        return (np.stack(cols, axis=-1) @ self.coeffs.T) * (2 * np.pi)

    def angle_of(self, points):
        """Chart angle of points in revolutions in [0, 1)."""
        rel = np.atleast_2d(points) - self.centroid
        a = rel @ self.basis[0]
        b = rel @ self.basis[1]
        return np.mod(np.arctan2(b, a) / (2 * np.pi), 1.0)

    def distance_to_curve(self, points, dense=2048, refine=4):
        """Per-point distance to the fitted curve (dense grid + Newton)."""
        points = np.atleast_2d(points)
        grid = np.arange(dense) / dense
        samples = self.curve(grid)
        out = np.empty(points.shape[0])
        block = 4096
        for lo in range(0, points.shape[0], block):
            chunk = points[lo:lo + block]
            d2 = (
                np.sum(chunk ** 2, axis=1)[:, None]
                - 2.0 * chunk @ samples.T
                + np.sum(samples ** 2, axis=1)[None, :]
            )
            best = np.argmin(d2, axis=1)
            phi = grid[best]
            for _ in range(refine):
                c = self.curve(phi)
                v = self.curve_velocity(phi)
                acc = _curve_accel(self, phi)
                diff = c - chunk
                g1 = np.sum(diff * v, axis=1)
                g2 = np.sum(v * v, axis=1) + np.sum(diff * acc, axis=1)
                step = np.where(g2 > 0, g1 / np.maximum(g2, 1e-300), 0.0)
                phi = phi - np.clip(step, -1.0 / dense, 1.0 / dense)
            out[lo:lo + block] = np.linalg.norm(self.curve(phi) - chunk, axis=1)
        return out


def _curve_accel(est, phi):
    phi_rad = 2 * np.pi * np.asarray(phi, dtype=float)
    cols = [np.zeros_like(phi_rad)]
    for h in range(1, est.harmonics + 1):
        cols.append(-h * h * np.cos(h * phi_rad))
        cols.append(-h * h * np.sin(h * phi_rad))
    return (np.stack(cols, axis=-1) @ est.coeffs.T) * (2 * np.pi) ** 2


def hausdorff_distance(A, B):
    """Symmetric Hausdorff distance between two point clouds."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)

    def one_sided(P, Q):
        worst = 0.0
        block = 2048
        for lo in range(0, P.shape[0], block):
            chunk = P[lo:lo + block]
            d2 = (
                np.sum(chunk ** 2, axis=1)[:, None]
                - 2.0 * chunk @ Q.T
                + np.sum(Q ** 2, axis=1)[None, :]
            )
            best = np.argmin(d2, axis=1)
            # recompute at the argmin: the expanded form cancels near zero
            exact = np.linalg.norm(chunk - Q[best], axis=1)
            worst = max(worst, float(exact.max()))
        return worst

    return max(one_sided(A, B), one_sided(B, A))


def fit_invariant_curve(orbit_stack, harmonics=16, eps=None, coverage_bins=32) -> TorusEstimate:
    """Fit a closed curve to recorded iterates.

    `orbit_stack` has shape (iterates, lanes, dim) with iterate order intact
    per lane (used to orient the chart along the map's drift) or (points,
    dim) for an unordered cloud.  The fit is trigonometric least squares in
    the angle around the cloud's principal plane; the invariance residual is
    left unset (detect_torus fills it by mapping curve samples).
    """
    orbit_stack = np.asarray(orbit_stack, dtype=float)
    ordered = orbit_stack.ndim == 3
    cloud = orbit_stack.reshape(-1, orbit_stack.shape[-1])
    cloud = cloud[np.all(np.isfinite(cloud), axis=1)]
    if cloud.shape[0] < 8 * harmonics:
        raise DetectionError(
            f"too few points ({cloud.shape[0]}) to fit {harmonics} harmonics"
        )

    centroid = cloud.mean(axis=0)
    rel = cloud - centroid
    _, _, vt = np.linalg.svd(rel, full_matrices=False)
    e1, e2 = vt[0], vt[1]

    if ordered:
        # orient the chart along the drift so rotation numbers come out >= 0
        a = (orbit_stack - centroid) @ e1
        b = (orbit_stack - centroid) @ e2
        ang = np.arctan2(b, a)
        dphi = np.diff(ang, axis=0)
        dphi = (dphi + np.pi) % (2 * np.pi) - np.pi
        if np.nansum(dphi) < 0:
            e2 = -e2

    basis = np.stack([e1, e2])
    phi = np.arctan2(rel @ e2, rel @ e1)

    counts, _ = np.histogram(np.mod(phi, 2 * np.pi), bins=coverage_bins, range=(0, 2 * np.pi))
    if np.any(counts == 0):
        raise DetectionError(
            f"angular coverage gap ({np.sum(counts == 0)} of {coverage_bins} bins empty); "
            "iterates do not wind around the centroid axis"
        )

    cols = [np.ones_like(phi)]
    for h in range(1, harmonics + 1):
        cols.append(np.cos(h * phi))
        cols.append(np.sin(h * phi))
    design = np.stack(cols, axis=-1)
    coeffs, *_ = np.linalg.lstsq(design, cloud, rcond=None)

    est = TorusEstimate(
        eps=float(eps) if eps is not None else float("nan"),
        centroid=centroid,
        basis=basis,
        coeffs=coeffs.T,
        harmonics=harmonics,
        fit_residual=0.0,
        invariance_residual=float("nan"),
        iterates_used=int(cloud.shape[0]),
    )
    est.fit_residual = float(np.percentile(est.distance_to_curve(cloud), 95.0))
    return est


def detect_torus(
    section_map,
    seeds,
    transient=2000,
    keep=4000,
    harmonics=16,
    eps=None,
    reference=None,
    residual_samples=256,
    coverage_bins=32,
) -> TorusEstimate:
    """Fit the invariant closed curve approached by the seeds' iterates.

    Discards `transient` iterates per seed, pools `keep` recorded iterates
    from every surviving seed, fits a closed curve by trigonometric least
    squares in the angle around the cloud's principal plane, and measures the
    invariance residual by mapping fitted-curve samples one step.  When
    `reference` points are given (the unperturbed cycle's section trace), the
    Hausdorff distance of the fitted curve to them is recorded.

    Raises DetectionError when every seed escapes or when the pooled cloud
    does not wind once around its centroid (angular coverage gap), which is
    what a self-intersecting or non-star-shaped fit looks like upstream.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    pts, _, status = section_map.apply_batch(seeds, transient, record=False)
    live = status == _kernels.STATUS_OK
    if not np.any(live):
        raise DetectionError("all seeds escaped during the transient")
    pts = pts[live]
    _, orbits, status = section_map.apply_batch(pts, keep, record=True)
    survived = status == _kernels.STATUS_OK
    if not np.any(survived):
        raise DetectionError("all seeds escaped while recording")
    est = fit_invariant_curve(
        orbits[:, survived, :], harmonics=harmonics, eps=eps, coverage_bins=coverage_bins
    )
    est.seeds_survived = int(np.sum(survived))

    # invariance: map curve samples one step, measure the distance back
    grid = np.arange(residual_samples) / residual_samples
    curve_pts = est.curve(grid)
    mapped, _, mstat = section_map.apply_batch(curve_pts, 1, record=False)
    ok = mstat == _kernels.STATUS_OK
    if not np.any(ok):
        raise DetectionError("fitted-curve samples escape under one map step",
                             fit_residual=est.fit_residual)
    est.invariance_residual = float(np.max(est.distance_to_curve(mapped[ok])))

    if reference is not None:
        dense = est.curve(np.arange(4096) / 4096)
        est.distance_to_unperturbed = float(hausdorff_distance(dense, np.atleast_2d(reference)))
    return est


# ---------------------------------------------------------------------------
# rotation number


@dataclass
class RotationEstimate:
    value: float                  # fractional part, in [0, 1)
    error: float                  # spread of windowed slope estimates
    per_phase: np.ndarray = field(repr=False, default=None)

    def __float__(self):
        return self.value


def rotation_number(
    section_map,
    torus: TorusEstimate,
    iterates,
    n_phases=16,
    transient=128,
    windows=8,
) -> RotationEstimate:
    """Birkhoff rotation number of the map restricted to the fitted curve.

    Orbits start at `n_phases` angles spread uniformly along the curve; each
    iterate is lifted to the chart angle and unwrapped.  The estimate is the
    mean of the per-phase slopes (which cancels the periodic part of the lift
    distortion); the error bar is the standard deviation of slopes measured
    over `windows` sub-windows of every orbit.
    """
    if iterates < 10:
        raise ValueError("need at least 10 iterates")
    phases = np.arange(n_phases) / n_phases
    start = torus.curve(phases)
    if transient:
        start, _, status = section_map.apply_batch(start, transient, record=False)
    else:
        status = np.zeros(start.shape[0], dtype=np.int64)
    live = status == _kernels.STATUS_OK
    if not np.any(live):
        raise GuardError("all phase orbits escaped during the rotation transient")
    start = start[live]
    _, orbits, status = section_map.apply_batch(start, iterates, record=True)
    good = status == _kernels.STATUS_OK
    if not np.any(good):
        raise GuardError("all phase orbits escaped while measuring rotation")
    orbits = orbits[:, good, :]

    ang = np.stack([torus.angle_of(orbits[k]) for k in range(orbits.shape[0])])
    steps = np.diff(ang, axis=0)
    steps = np.mod(steps + 0.5, 1.0) - 0.5
    if np.max(np.abs(steps)) > 0.45:
        raise GuardError(
            "angular lift is ambiguous (jump > 0.45 revolutions per iterate); "
            "use more harmonics or a smaller perturbation"
        )
    lifts = np.concatenate([ang[:1], ang[:1] + np.cumsum(steps, axis=0)], axis=0)
    n = lifts.shape[0] - 1
    per_phase = (lifts[-1] - lifts[0]) / n

    # windowed slopes for the error bar
    bounds = np.linspace(0, n, windows + 1).astype(int)
    slopes = []
    for w in range(windows):
        lo, hi = bounds[w], bounds[w + 1]
        if hi > lo:
            slopes.append((lifts[hi] - lifts[lo]) / (hi - lo))
    slopes = np.concatenate(slopes)

    value = float(np.mean(per_phase))
    error = float(np.std(slopes))
    return RotationEstimate(value=np.mod(value, 1.0), error=error, per_phase=per_phase)


# ---------------------------------------------------------------------------
# stability probe


def stability_probe(
    section_map,
    torus: TorusEstimate,
    radius,
    trials,
    horizon,
    seed=0,
    chunk=500,
):
    """Empirical attraction/escape statistics at a fixed distance from the
    fitted curve.

    Points start at `radius` from random curve points, offset along random
    unit directions normal to the curve tangent.  After `horizon` iterates a
    trial counts as attracted when its distance to the curve is below
    radius/10; it counts as escaped as soon as it blows up or exceeds
    10*radius.  Everything else is undecided.  All outcomes are data; nothing
    raises.
    """
    rng = np.random.default_rng(seed)
    phis = rng.uniform(0.0, 1.0, size=trials)
    base = torus.curve(phis)
    tangent = torus.curve_velocity(phis)
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)

    dirs = rng.standard_normal(size=(trials, section_map.dim))
    dirs -= np.sum(dirs * tangent, axis=1, keepdims=True) * tangent
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    degenerate = norms[:, 0] < 1e-12
    if np.any(degenerate):  # resample the measure-zero unlucky draws
        dirs[degenerate] = rng.standard_normal(size=(int(degenerate.sum()), section_map.dim))
        dirs[degenerate] -= (
            np.sum(dirs[degenerate] * tangent[degenerate], axis=1, keepdims=True)
            * tangent[degenerate]
        )
        norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs /= norms

    pts = base + radius * dirs
    escaped = np.zeros(trials, dtype=bool)
    remaining = horizon
    while remaining > 0:
        step = min(chunk, remaining)
        pts, _, status = section_map.apply_batch(pts, step, record=False)
        remaining -= step
        blown = status != _kernels.STATUS_OK
        newly = blown & ~escaped
        escaped |= newly
        live = ~escaped
        if np.any(live):
            d = np.full(trials, np.nan)
            d[live] = torus.distance_to_curve(pts[live])
            far = live & (d > 10.0 * radius)
            escaped |= far
            live = ~escaped
        if not np.any(live):
            break
        # frozen lanes keep nan states; restart the batch with live lanes only
        pts = np.where(live[:, None], pts, np.nan)

    final_live = ~escaped & np.all(np.isfinite(pts), axis=1)
    dist = np.full(trials, np.inf)
    if np.any(final_live):
        dist[final_live] = torus.distance_to_curve(pts[final_live])
    attracted = final_live & (dist < radius / 10.0)

    fa = float(np.mean(attracted))
    fe = float(np.mean(escaped))
    if fa >= 0.95:
        classification = "attracting"
    elif fe >= 0.05 and fa >= 0.05:
        classification = "saddle-like"
    elif fe >= 0.05:
        classification = "escaping"
    else:
        classification = "undecided"
    return {
        "fraction_attracted": fa,
        "fraction_escaped": fe,
        "fraction_undecided": float(np.mean(~attracted & ~escaped)),
        "classification": classification,
        "trials": int(trials),
        "radius": float(radius),
        "horizon": int(horizon),
        "rng_seed": int(seed),
    }


# ---------------------------------------------------------------------------
# averaged-equation closeness


def averaging_closeness(
    spec,
    ell,
    z0,
    eps_list,
    quad=None,
    cfg: IntegratorConfig | None = None,
    horizon_factor=1.0,
    checkpoints=50,
    box=None,
):
    """Max deviation between the full flow and the truncated averaged flow
    dz/dt = eps^ell g_ell(z) over a horizon of horizon_factor / eps, per
    parameter value.  Returns a list of {eps, deviation, horizon} records.
    """
    cfg = cfg or IntegratorConfig(abs_tol=1e-10, rel_tol=1e-10)
    z0 = np.asarray(z0, dtype=float)
    g = AveragedField(spec, ell, quad=quad, box=box)
    rows = []
    for eps in eps_list:
        eps = float(eps)
        if eps == 0.0:
            rows.append({"eps": 0.0, "deviation": 0.0, "horizon": 0.0})
            continue
        horizon = horizon_factor / eps
        times = np.linspace(0.0, horizon, checkpoints + 1)[1:]
        full_field = EpsField(spec, eps)
        avg_field = lambda t, z: (eps ** ell) * g(t, z)
        zf, za = z0.copy(), z0.copy()
        t_prev = 0.0
        worst = 0.0
        for t in times:
            zf = flow(full_field, t_prev, t, zf, cfg)
            za = flow(avg_field, t_prev, t, za, cfg)
            worst = max(worst, float(np.max(np.abs(zf - za))))
            t_prev = t
        rows.append({"eps": eps, "deviation": worst, "horizon": horizon})
    return rows
