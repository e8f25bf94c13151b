"""Hyperbolic limit cycles of autonomous guiding systems.

Newton shooting locates a periodic orbit together with its period.  The
solver uses multiple shooting: the period splits into m segments with
matching conditions between consecutive segment states, a fixed phase plane
through the initial guess removing the time-shift degeneracy, and a damped
Newton iteration with the period confined to a trust band around the guess
(which excludes the spurious zero-period branch).  m = 1 recovers plain
single shooting; for strongly unstable cycles the segment count is chosen
automatically from a short variational probe so that per-segment error
growth stays mild, and the initial loop is extrapolated as a circle fitted
to a short forward arc of the guess (following the flow for a full period
would simply blow up along the unstable direction).

The monodromy matrix is the ordered product of the segment tangent maps.
Its eigenvalues are the characteristic multipliers, one trivially 1 along
the flow.  Two numerical safeguards matter for saddle cycles: the
determinant is accumulated as the product of segment determinants (exact
identity, immune to the cancellation that forming the big product suffers),
and a smallest eigenvalue far below roundoff-times-norm is recovered from
that determinant divided by the remaining well-conditioned eigenvalues.
Liouville's formula (det = exp of the integrated divergence) remains an
independent cross-check computed from the field, never from the monodromy.

A real Floquet exponent matrix comes from a real matrix logarithm; when the
monodromy has unpaired negative real eigenvalues the logarithm is taken of
the squared matrix with the period doubled.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from torusavg.errors import BlowupError, SolverError
from torusavg.integrate import IntegratorConfig, flow, flow_variational

__all__ = [
    "LimitCycle",
    "FloquetLog",
    "find_cycle",
    "liouville_det",
    "floquet_log",
    "classify_stability",
]


@dataclass
class LimitCycle:
    """A periodic orbit with its one-period linearization."""

    anchor: np.ndarray          # point z* on the cycle
    period: float               # omega
    monodromy: np.ndarray       # fundamental matrix over one period
    multipliers: np.ndarray     # eigenvalues of the monodromy
    trivial_index: int          # index of the multiplier ~ 1 (flow direction)
    k: int                      # non-trivial multipliers with modulus < 1
    hyperbolic: bool
    residual: float             # worst matching defect after Newton
    det: float                  # det(monodromy) via segment determinants
    segments: int = 1


@dataclass
class FloquetLog:
    """Real matrix B with exp(2 omega B) = monodromy^2; `doubled` records
    whether the period had to be doubled to keep the logarithm real."""

    B: np.ndarray
    doubled: bool


def _multiplier_analysis(monodromy, det_precise, unit_circle_tol):
    mults = np.linalg.eigvals(monodromy)
    # a multiplier far below roundoff * norm(M) is meaningless in the eigen-
    # decomposition of the formed product; recover it from the precisely
    # accumulated determinant and the well-conditioned large eigenvalues
    order = np.argsort(np.abs(mults))
    smallest = order[0]
    scale = max(1.0, float(np.linalg.norm(monodromy, 2)))
    if (
        np.abs(mults[smallest]) < 1e-9 * scale
        and abs(mults[smallest].imag) <= 1e-8 * abs(mults[smallest].real)
    ):
        others = np.prod(mults[order[1:]])
        if others != 0 and abs(others.imag) <= 1e-6 * abs(others.real):
            mults[smallest] = det_precise / others.real
    trivial = int(np.argmin(np.abs(mults - 1.0)))
    on_circle = np.abs(np.abs(mults) - 1.0) <= unit_circle_tol
    hyperbolic = bool(on_circle[trivial]) and int(np.sum(on_circle)) == 1
    nontrivial = np.delete(np.arange(mults.size), trivial)
    k = int(np.sum(np.abs(mults[nontrivial]) < 1.0))
    return mults, trivial, k, hyperbolic


def _probe_segments(g, z_guess, omega_guess, max_segments):
    """Pick a segment count from the tangent growth over a short probe."""
    tau = omega_guess / 16.0
    cfg = IntegratorConfig(abs_tol=1e-8, rel_tol=1e-8)
    try:
        var = flow_variational(g, 0.0, tau, z_guess, cfg)
        growth = float(np.linalg.norm(var.psi, 2))
        rate = max(np.log(max(growth, 1.0)), 0.0) / tau
    except (BlowupError, SolverError) as err:
        t_star = getattr(err, "time", None) or tau
        rate = np.log(1e8) / max(t_star, 1e-6)
    m = int(np.ceil(omega_guess * rate / np.log(8.0))) if rate > 0 else 1
    return int(min(max(m, 1), max_segments))


def _fit_circle(points):
    """Least-squares circle through 2D points: center, radius."""
    x, y = points[:, 0], points[:, 1]
    A = np.stack([2 * x, 2 * y, np.ones_like(x)], axis=-1)
    sol, *_ = np.linalg.lstsq(A, x ** 2 + y ** 2, rcond=None)
    cx, cy, c = sol
    R = np.sqrt(max(c + cx ** 2 + cy ** 2, 0.0))
    return np.array([cx, cy]), R


def _init_loop(g, z_guess, omega_guess, m):
    """Initial segment states: follow the flow while it stays near the
    guess; if it leaves (unstable cycle), extrapolate the remaining winding
    as a circle fitted to the collected arc."""
    z_guess = np.asarray(z_guess, dtype=float)
    n = z_guess.size
    if m == 1:
        return z_guess[None, :].copy()
    scale = 1.0 + float(np.linalg.norm(z_guess))
    cfg = IntegratorConfig(abs_tol=1e-8, rel_tol=1e-8, blowup=1e6)
    probe_dt = omega_guess / max(8 * m, 64)
    # collect the arc only while it stays close to the guess: past that, an
    # unstable direction dominates and would poison the extrapolation
    wander = 0.15 * scale
    arc = [z_guess.copy()]
    t = 0.0
    while t < omega_guess:
        try:
            nxt = flow(g, 0.0, probe_dt, arc[-1], cfg)
        except (BlowupError, SolverError):
            break
        if np.linalg.norm(nxt - z_guess) > wander and t > 0:
            break
        arc.append(nxt)
        t += probe_dt
    arc = np.asarray(arc)
    times = np.arange(len(arc)) * probe_dt
    if times[-1] >= 0.95 * omega_guess:
        # benign case: resample the full loop from the flowed arc
        idx = np.minimum(
            np.round(np.arange(m) * (omega_guess / m) / probe_dt).astype(int),
            len(arc) - 1,
        )
        return arc[idx].copy()
    if len(arc) < 5:
        raise SolverError(
            "cannot build an initial loop: the flow leaves the guess "
            "neighborhood immediately; provide a guess closer to the cycle"
        )
    # plane of the arc, in-plane circle fit, uniform winding extrapolation
    centroid = arc.mean(axis=0)
    _, _, vt = np.linalg.svd(arc - centroid, full_matrices=False)
    e1, e2 = vt[0], vt[1]
    plane_pts = np.stack([(arc - centroid) @ e1, (arc - centroid) @ e2], axis=-1)
    c2, radius = _fit_circle(plane_pts)
    if not np.isfinite(radius) or radius < 1e-8 * scale:
        raise SolverError("initial-loop circle fit degenerate; improve the guess")
    ang = np.unwrap(np.arctan2(plane_pts[:, 1] - c2[1], plane_pts[:, 0] - c2[0]))
    if abs(ang[-1] - ang[0]) < 0.3:
        raise SolverError(
            "initial arc spans too little angle to extrapolate a loop; "
            "provide a guess closer to the cycle or a segments count"
        )
    direction = 1.0 if ang[-1] >= ang[0] else -1.0
    phi0 = ang[0]
    center3 = centroid + c2[0] * e1 + c2[1] * e2
    phis = phi0 + direction * 2 * np.pi * np.arange(m) / m
    loop = center3 + radius * (
        np.cos(phis)[:, None] * e1 + np.sin(phis)[:, None] * e2
    )
    loop[0] = z_guess
    return loop


def find_cycle(
    g,
    z_guess,
    omega_guess,
    cfg: IntegratorConfig | None = None,
    newton_tol=1e-10,
    max_iter=50,
    unit_circle_tol=1e-4,
    monodromy_cfg: IntegratorConfig | None = None,
    segments=None,
    max_segments=64,
) -> LimitCycle:
    """Newton shooting for a periodic orbit of dz/dt = g(z) near the guess.

    `g` is called as g(t, z) and must expose `jacobian(t, z)`.  The phase
    condition anchors the first segment state to the hyperplane through
    z_guess orthogonal to g(z_guess); the period stays within [0.3, 3] times
    the guess.  Raises SolverError on divergence, a degenerate shooting
    Jacobian, or convergence to an equilibrium; a non-hyperbolic converged
    cycle is returned with hyperbolic=False, not raised.
    """
    cfg = cfg or IntegratorConfig(abs_tol=1e-11, rel_tol=1e-11)
    monodromy_cfg = monodromy_cfg or IntegratorConfig(abs_tol=1e-13, rel_tol=1e-13)
    z_guess = np.asarray(z_guess, dtype=float)
    n = z_guess.size
    omega_guess = float(omega_guess)
    if omega_guess <= 0:
        raise ValueError("omega_guess must be positive")

    phase_normal = np.asarray(g(0.0, z_guess), dtype=float)
    norm0 = np.linalg.norm(phase_normal)
    if norm0 == 0.0:
        raise SolverError("guess is an equilibrium: phase condition undefined")
    phase_normal = phase_normal / norm0

    def newton(m):
        Z = _init_loop(g, z_guess, omega_guess, m)
        omega = omega_guess

        def residual_jacobian(Zc, om):
            tau = om / m
            H = np.empty(m * n + 1)
            J = np.zeros((m * n + 1, m * n + 1))
            for i in range(m):
                var = flow_variational(g, 0.0, tau, Zc[i], cfg)
                H[i * n:(i + 1) * n] = var.z - Zc[(i + 1) % m]
                J[i * n:(i + 1) * n, i * n:(i + 1) * n] = var.psi
                jn = ((i + 1) % m) * n
                J[i * n:(i + 1) * n, jn:jn + n] -= np.eye(n)
                J[i * n:(i + 1) * n, m * n] = np.asarray(g(tau, var.z), dtype=float) / m
            H[m * n] = phase_normal @ (Zc[0] - z_guess)
            J[m * n, :n] = phase_normal
            return H, J

        def residual_only(Zc, om):
            tau = om / m
            worst = 0.0
            for i in range(m):
                end = flow(g, 0.0, tau, Zc[i], cfg)
                worst = max(worst, float(np.max(np.abs(end - Zc[(i + 1) % m]))))
            return max(worst, abs(phase_normal @ (Zc[0] - z_guess)))

        residual = np.inf
        stalls = 0
        for _ in range(max_iter):
            try:
                H, J = residual_jacobian(Z, omega)
            except BlowupError as err:
                raise SolverError(f"shooting trajectory blew up: {err}") from err
            residual = float(np.max(np.abs(H)))
            if residual < newton_tol:
                return Z, omega
            try:
                delta = np.linalg.solve(J, -H)
            except np.linalg.LinAlgError as err:
                raise SolverError(f"degenerate shooting Jacobian: {err}") from err
            if not np.all(np.isfinite(delta)):
                raise SolverError("Newton step is not finite")
            lam, accepted = 1.0, False
            for _ in range(12):
                Zt = Z + lam * delta[:m * n].reshape(m, n)
                ot = omega + lam * delta[m * n]
                if 0.3 * omega_guess <= ot <= 3.0 * omega_guess:
                    try:
                        if residual_only(Zt, ot) <= max(0.99 * residual, newton_tol):
                            accepted = True
                            break
                    except (BlowupError, SolverError):
                        pass
                lam *= 0.5
            if not accepted:
                stalls += 1
                if stalls >= 3:
                    raise SolverError(
                        f"Newton shooting stalled (residual {residual:.3e}); "
                        "the guess may be outside the basin"
                    )
            else:
                stalls = 0
            Z = Z + lam * delta[:m * n].reshape(m, n)
            omega = omega + lam * delta[m * n]
        raise SolverError(
            f"Newton shooting did not converge in {max_iter} iterations "
            f"(residual {residual:.3e})"
        )

    m = segments if segments is not None else _probe_segments(g, z_guess, omega_guess, max_segments)
    m = int(min(max(m, 1), max_segments))
    while True:
        try:
            Z, omega = newton(m)
            break
        except SolverError:
            # segment flows may blow up nonlinearly even when the linear
            # growth estimate looked tame; shorter segments shrink both
            if segments is not None or m >= max_segments:
                raise
            m = min(2 * m, max_segments)

    speed = np.linalg.norm(np.asarray(g(0.0, Z[0]), dtype=float))
    if speed < 1e-10 * max(1.0, np.linalg.norm(Z[0])):
        raise SolverError("converged to an equilibrium, not a periodic orbit")

    # tight final pass: segment tangent maps, matching defect, determinant
    tau = omega / m
    monodromy = np.eye(n)
    det = 1.0
    residual = 0.0
    for i in range(m):
        var = flow_variational(g, 0.0, tau, Z[i], monodromy_cfg)
        monodromy = var.psi @ monodromy
        det *= float(np.linalg.det(var.psi))
        residual = max(residual, float(np.max(np.abs(var.z - Z[(i + 1) % m]))))

    mults, trivial, k, hyperbolic = _multiplier_analysis(monodromy, det, unit_circle_tol)
    return LimitCycle(
        anchor=Z[0].copy(),
        period=omega,
        monodromy=monodromy,
        multipliers=mults,
        trivial_index=trivial,
        k=k,
        hyperbolic=hyperbolic,
        residual=residual,
        det=det,
        segments=m,
    )


def liouville_det(g, cycle: LimitCycle, cfg: IntegratorConfig | None = None) -> float:
    """exp of the divergence of g integrated along the cycle: an independent
    route to det(monodromy).  `g` must expose `divergence(t, z)` or a
    `jacobian` whose trace is used."""
    cfg = cfg or IntegratorConfig(abs_tol=1e-13, rel_tol=1e-13)
    if hasattr(g, "divergence"):
        div = g.divergence
    else:
        div = lambda t, z: float(np.trace(g.jacobian(t, z)))

    n = cycle.anchor.size

    def rhs(t, state):
        z = state[:n]
        return np.concatenate([np.asarray(g(t, z), dtype=float), [div(t, z)]])

    out = flow(rhs, 0.0, cycle.period, np.concatenate([cycle.anchor, [0.0]]), cfg)
    return float(np.exp(out[n]))


def _principal_real_log(A):
    """scipy's principal logarithm when it is (numerically) real."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        W = scipy.linalg.logm(A)
    scale = 1.0 + float(np.max(np.abs(W.real)))
    if float(np.max(np.abs(W.imag))) <= 1e-8 * scale:
        return W.real
    return None


def _paired_negative_real_log(M, tol=1e-9):
    """Real logarithm for a diagonalizable matrix whose negative real
    eigenvalues come in equal pairs: each pair spans a real invariant plane
    on which -a acts as a scaled half-turn, whose generator is real.
    Returns None whenever the construction does not apply."""
    n = M.shape[0]
    w, V = np.linalg.eig(M)
    is_real = np.abs(w.imag) <= tol * np.maximum(1.0, np.abs(w))
    neg = [i for i in range(n) if is_real[i] and w[i].real < 0]
    if not neg:
        return None
    groups = []
    for i in neg:
        for grp in groups:
            if abs(w[i].real - w[grp[0]].real) <= 1e-6 * abs(w[grp[0]].real):
                grp.append(i)
                break
        else:
            groups.append([i])
    if any(len(grp) % 2 for grp in groups):
        return None

    cols, blocks = [], []
    for grp in groups:
        cand = np.column_stack(
            [f(V[:, i]) for i in grp for f in (np.real, np.imag)]
        )
        basis = scipy.linalg.orth(cand, rcond=1e-10)
        if basis.shape[1] != len(grp):
            return None  # defective eigenspace
        a = -w[grp[0]].real
        for j in range(0, len(grp), 2):
            cols.append(basis[:, j])
            cols.append(basis[:, j + 1])
            blocks.append(np.array([[np.log(a), -np.pi], [np.pi, np.log(a)]]))

    done_conj = set()
    for i in range(n):
        if i in neg or i in done_conj:
            continue
        lam = w[i]
        if is_real[i]:
            vec = np.real(V[:, i])
            nrm = np.linalg.norm(vec)
            if nrm < tol:
                vec = np.imag(V[:, i])
                nrm = np.linalg.norm(vec)
            cols.append(vec / nrm)
            blocks.append(np.array([[np.log(lam.real)]]))
        else:
            if lam.imag < 0:
                continue
            j = int(np.argmin(np.abs(w - np.conj(lam))))
            done_conj.add(j)
            vre, vim = np.real(V[:, i]), np.imag(V[:, i])
            cols.append(vre)
            cols.append(vim)
            # M [vre vim] = [vre vim] [[a, b], [-b, a]] for lam = a + i b
            C = np.array([[lam.real, lam.imag], [-lam.imag, lam.real]])
            blocks.append(scipy.linalg.logm(C).real)

    if len(cols) != n:
        return None
    basis = np.column_stack(cols)
    if np.linalg.cond(basis) > 1e10:
        return None
    L = basis @ scipy.linalg.block_diag(*blocks) @ np.linalg.inv(basis)
    return L


def floquet_log(cycle: LimitCycle, roundtrip_tol=1e-6) -> FloquetLog:
    """Real Floquet exponent matrix of the cycle's monodromy.

    A real logarithm of M exists when every negative real eigenvalue pairs
    up (paired half-turn planes); otherwise the matrix is squared and the
    period doubled.  The result always satisfies
    ||exp(2 omega B) - M^2|| <= roundtrip_tol ||M^2||.
    """
    M = cycle.monodromy
    omega = cycle.period
    if abs(np.linalg.det(M)) < 1e-300:
        raise SolverError("monodromy is singular; no logarithm")

    M2 = M @ M
    scale2 = max(np.linalg.norm(M2), 1e-300)

    def roundtrip_ok(W, target, scale):
        defect = np.linalg.norm(scipy.linalg.expm(W) - target)
        return defect <= roundtrip_tol * scale

    W = _principal_real_log(M)
    if W is None:
        W = _paired_negative_real_log(M)
    if W is not None and roundtrip_ok(W, M, max(np.linalg.norm(M), 1e-300)):
        return FloquetLog(B=W / omega, doubled=False)

    W2 = _principal_real_log(M2)
    if W2 is None or not roundtrip_ok(W2, M2, scale2):
        raise SolverError(
            "no real logarithm even after squaring; monodromy is defective "
            "beyond the supported block structure"
        )
    return FloquetLog(B=W2 / (2.0 * omega), doubled=True)


def classify_stability(cycle: LimitCycle) -> dict:
    """Count contracting directions: k non-trivial multipliers inside the
    unit circle; the cycle attracts iff all n-1 of them are inside."""
    if not cycle.hyperbolic:
        raise ValueError("stability classification requires a hyperbolic cycle")
    n = cycle.multipliers.size
    return {
        "k": cycle.k,
        "attracting": cycle.k == n - 1,
        "unstable_directions": n - 1 - cycle.k,
    }
