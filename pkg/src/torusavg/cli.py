"""Command-line front end: system loading, experiments, result emission.

Exit codes: 0 success, 2 usage/validation, 3 averaging-hypothesis violation,
4 solver or detection failure, 5 validity guard, 1 internal error.  Every
output embeds a fingerprint of the normalized configuration; reruns with the
same configuration are byte-identical.
"""

from __future__ import annotations

import sys
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from torusavg import __version__
from torusavg.bell import bell_eval
from torusavg.cycles import classify_stability, find_cycle, liouville_det
from torusavg.errors import (
    BlowupError,
    GuardError,
    HypothesisError,
    NonFiniteError,
    SolverError,
)
from torusavg.example4d import Example4DConfig, cylindrical_spec, guiding_field, reproduce_fig1
from torusavg.experiments import probe_example4d, rotation_scaling_fit, torus_sweep
from torusavg.melnikov import MelnikovEvaluator, sample_box, vanishing_defect
from torusavg.quadrature import QuadratureConfig
from torusavg.report import config_fingerprint, write_csv, write_json
from torusavg.system import AutonomousField, SystemDefinitionError, load_system
from torusavg.torus import DetectionError, StroboscopicMap, detect_torus, rotation_number
from torusavg.expr import ExprSyntaxError

EXIT_USAGE = 2
EXIT_HYPOTHESIS = 3
EXIT_SOLVER = 4
EXIT_GUARD = 5
EXIT_INTERNAL = 1


def parse_number(text):
    """Numbers on the command line may be fractions like 1/15."""
    text = str(text).strip()
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def parse_grid(spec_text):
    """Per-dimension "lo:hi:count" blocks separated by commas, expanded to a
    full product grid."""
    axes = []
    for block in spec_text.split(","):
        parts = block.split(":")
        if len(parts) != 3:
            raise click.UsageError(f"grid block {block!r} is not lo:hi:count")
        lo, hi, count = parse_number(parts[0]), parse_number(parts[1]), int(parts[2])
        if count < 1:
            raise click.UsageError("grid count must be >= 1")
        axes.append(np.linspace(lo, hi, count))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_cli_config(path):
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def guarded(fn):
    """Map toolkit exceptions onto the documented exit codes."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (click.UsageError, click.BadParameter):
            raise
        except HypothesisError as err:
            _fail(EXIT_HYPOTHESIS, err)
        except GuardError as err:
            _fail(EXIT_GUARD, err)
        except (SolverError, BlowupError, DetectionError) as err:
            _fail(EXIT_SOLVER, err)
        except (ValueError, ExprSyntaxError, SystemDefinitionError, NonFiniteError, OSError) as err:
            _fail(EXIT_USAGE, err)
        except Exception as err:  # pragma: no cover - the last-resort path
            _fail(EXIT_INTERNAL, f"internal error: {err!r}")

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@click.group()
@click.version_option(__version__)
def cli():
    """Higher order averaging toolkit: Melnikov functions, guiding-system
    limit cycles, and invariant-torus experiments."""


@cli.command("bell")
@click.argument("n", type=int)
@click.argument("k", type=int)
@click.argument("x", nargs=-1, type=str, required=True)
@guarded
def cmd_bell(n, k, x):
    """Evaluate the partial Bell polynomial B(N, K) at X1..X(N-K+1).

    Integer arguments evaluate exactly."""
    def coerce(s):
        try:
            return int(s)
        except ValueError:
            return parse_number(s)

    value = bell_eval(n, k, [coerce(s) for s in x])
    click.echo(f"{value}")


def _load_perturbed_system(system, builtin, mu, big_n):
    if (system is None) == (builtin is None):
        raise click.UsageError("give exactly one of --system or --builtin")
    if system is not None:
        return load_system(system), None
    if builtin != "example4d":
        raise click.UsageError(f"unknown builtin {builtin!r} (available: example4d)")
    cfg = Example4DConfig(big_n=big_n, mu=mu)
    return cylindrical_spec(cfg), cfg


@cli.command("melnikov")
@click.option("--system", type=click.Path(exists=True), help="TOML system definition")
@click.option("--builtin", type=str, help="built-in system name (example4d)")
@click.option("--mu", type=int, default=1, show_default=True)
@click.option("--bigN", "big_n", type=int, default=2, show_default=True)
@click.option("--order", type=int, required=True, help="Melnikov order i")
@click.option("--grid", type=str, required=True, help="per-dim lo:hi:count, comma separated")
@click.option("--averaged", is_flag=True, help="also emit g = f/T (requires vanishing lower orders)")
@click.option("--vanish-tol", type=float, default=1e-8, show_default=True)
@click.option("--tol-quad", type=float, default=1e-10, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@guarded
def cmd_melnikov(system, builtin, mu, big_n, order, grid, averaged, vanish_tol, tol_quad, out):
    """Tabulate the order-i Melnikov function on a state grid as CSV."""
    spec, _ = _load_perturbed_system(system, builtin, mu, big_n)
    points = parse_grid(grid)
    if points.shape[1] != spec.n:
        raise click.UsageError(f"grid has {points.shape[1]} dims, system has {spec.n}")
    if not 1 <= order <= spec.N:
        raise click.UsageError(f"order must be in 1..{spec.N}")
    quad = QuadratureConfig(abs_tol=tol_quad)
    if averaged and order > 1:
        box = list(zip(points.min(axis=0), points.max(axis=0)))
        defect = vanishing_defect(spec, range(1, order), sample_box(box), quad)
        if defect > vanish_tol:
            raise HypothesisError(
                f"lower-order Melnikov functions do not vanish on the grid box "
                f"(max |f_j| = {defect:.3e} > {vanish_tol:.1e}); --averaged refused"
            )
    config = {
        "command": "melnikov",
        "system": spec.name or str(system),
        "order": order,
        "grid": grid,
        "averaged": averaged,
        "tol_quad": tol_quad,
    }
    fp = config_fingerprint(config)
    header = [f"z{i+1}" for i in range(spec.n)] + [f"f{i+1}" for i in range(spec.n)]
    if averaged:
        header += [f"g{i+1}" for i in range(spec.n)]

    def rows():
        for z in points:
            ev = MelnikovEvaluator(spec, z, quad)
            f = ev.f(order)
            row = list(z) + list(f)
            if averaged:
                row += list(f / spec.T)
            yield row

    write_csv(out, header, rows(), fingerprint=fp)
    click.echo(f"wrote {out} ({points.shape[0]} points, fingerprint {fp})")


@cli.command("cycle")
@click.option("--builtin", type=str, help="built-in guiding system (example4d-guiding)")
@click.option("--guiding-file", type=click.Path(exists=True),
              help="TOML autonomous field: n plus [[order]] i=1 components")
@click.option("--mu", type=int, default=1, show_default=True)
@click.option("--guess", type=str, required=True, help="comma-separated state guess")
@click.option("--omega-guess", type=float, required=True)
@click.option("--segments", type=int, default=None, help="multiple-shooting segments (default auto)")
@click.option("--out", type=click.Path(), required=True)
@guarded
def cmd_cycle(builtin, guiding_file, mu, guess, omega_guess, segments, out):
    """Locate a limit cycle of a guiding system; emit a JSON report."""
    if (builtin is None) == (guiding_file is None):
        raise click.UsageError("give exactly one of --builtin or --guiding-file")
    if builtin is not None:
        if builtin != "example4d-guiding":
            raise click.UsageError(f"unknown builtin {builtin!r}")
        field = guiding_field(Example4DConfig(mu=mu))
    else:
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(guiding_file, "rb") as fh:
            data = tomllib.load(fh)
        field = AutonomousField(data["components"], name=str(guiding_file))
    z_guess = [parse_number(v) for v in guess.split(",")]
    config = {
        "command": "cycle",
        "field": field.name,
        "guess": z_guess,
        "omega_guess": omega_guess,
        "segments": segments,
    }
    cycle = find_cycle(field, z_guess, omega_guess, segments=segments)
    det_liouville = liouville_det(field, cycle)
    report = {
        "anchor": list(cycle.anchor),
        "omega": cycle.period,
        "multipliers": [{"re": m.real, "im": m.imag} for m in cycle.multipliers],
        "trivial_index": cycle.trivial_index,
        "k": cycle.k,
        "hyperbolic": cycle.hyperbolic,
        "residual": cycle.residual,
        "segments": cycle.segments,
        "det_monodromy": cycle.det,
        "det_liouville": det_liouville,
        "det_check": abs(cycle.det - det_liouville) / max(abs(det_liouville), 1e-300),
        "classification": classify_stability(cycle) if cycle.hyperbolic else None,
        "fingerprint": config_fingerprint(config),
        "config": config,
    }
    write_json(out, report)
    click.echo(f"omega = {cycle.period:.12g}, hyperbolic = {cycle.hyperbolic}; wrote {out}")


@cli.command("torus")
@click.option("--config", "config_file", type=click.Path(exists=True),
              help="TOML file with the same keys as the flags (flags win)")
@click.option("--system", type=click.Path(exists=True), help="TOML system definition")
@click.option("--builtin", type=str, help="built-in system name (example4d)")
@click.option("--mu", type=int, default=1, show_default=True)
@click.option("--bigN", "big_n", type=int, default=2, show_default=True)
@click.option("--eps", "eps_single", type=str, default=None, help="single value, e.g. 1/15")
@click.option("--eps-grid", type=str, default=None, help="comma-separated values")
@click.option("--seeds", type=str, default="48",
              help="seed count (builtin fan) or semicolon-separated points")
@click.option("--iters", type=int, default=2000, show_default=True, help="kept iterates per seed")
@click.option("--transient", type=int, default=None,
              help="transient iterates (default: contraction-rate based for the builtin)")
@click.option("--harmonics", type=int, default=12, show_default=True)
@click.option("--rot-iters", type=int, default=3000, show_default=True)
@click.option("--steps", type=int, default=64, show_default=True, help="RK4 steps per period")
@click.option("--rng-seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="output directory")
@guarded
def cmd_torus(config_file, system, builtin, mu, big_n, eps_single, eps_grid, seeds,
              iters, transient, harmonics, rot_iters, steps, rng_seed, out):
    """Detect invariant curves over a parameter grid; emit CSV + JSON."""
    if config_file is not None:
        ctx = click.get_current_context()
        values = _load_cli_config(config_file)
        names = {
            "system": "system", "builtin": "builtin", "mu": "mu", "bigN": "big_n",
            "eps": "eps_single", "eps_grid": "eps_grid", "seeds": "seeds",
            "iters": "iters", "transient": "transient", "harmonics": "harmonics",
            "rot_iters": "rot_iters", "steps": "steps", "rng_seed": "rng_seed",
            "out": "out",
        }
        unknown = set(values) - set(names)
        if unknown:
            raise click.UsageError(f"unknown config keys {sorted(unknown)}")
        overrides = {}
        for key, param in names.items():
            if key in values and ctx.get_parameter_source(param).name != "COMMANDLINE":
                overrides[param] = values[key]
        system = overrides.get("system", system)
        builtin = overrides.get("builtin", builtin)
        mu = int(overrides.get("mu", mu))
        big_n = int(overrides.get("big_n", big_n))
        if "eps_single" in overrides:
            eps_single = str(overrides["eps_single"])
        if "eps_grid" in overrides:
            eps_grid = str(overrides["eps_grid"])
        seeds = str(overrides.get("seeds", seeds))
        iters = int(overrides.get("iters", iters))
        transient = overrides.get("transient", transient)
        harmonics = int(overrides.get("harmonics", harmonics))
        rot_iters = int(overrides.get("rot_iters", rot_iters))
        steps = int(overrides.get("steps", steps))
        rng_seed = int(overrides.get("rng_seed", rng_seed))
        out = overrides.get("out", out)
    if out is None:
        raise click.UsageError("an output directory is required (--out or config)")
    if (eps_single is None) == (eps_grid is None):
        raise click.UsageError("give exactly one of --eps or --eps-grid")
    eps_values = [parse_number(v) for v in (eps_grid or eps_single).split(",")]
    if any(e <= 0 for e in eps_values):
        raise click.UsageError("eps values must be positive")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = {
        "command": "torus",
        "mu": mu,
        "bigN": big_n,
        "eps": eps_values,
        "seeds": seeds,
        "iters": iters,
        "transient": transient,
        "harmonics": harmonics,
        "rot_iters": rot_iters,
        "steps": steps,
        "rng_seed": rng_seed,
    }

    if builtin is not None:
        if builtin != "example4d":
            raise click.UsageError(f"unknown builtin {builtin!r}")
        cfg = Example4DConfig(big_n=big_n, mu=mu)
        config["system"] = "example4d"
        rows = torus_sweep(
            cfg,
            eps_values,
            lanes=int(seeds),
            keep=iters,
            steps_per_period=steps,
            harmonics=harmonics,
            rot_iterates=rot_iters,
            transient=transient,
        )
    elif system is not None:
        spec = load_system(system)
        config["system"] = spec.name or str(system)
        seed_pts = np.array(
            [[parse_number(v) for v in p.split(",")] for p in seeds.split(";")]
        )
        rows = []
        for eps in eps_values:
            smap = StroboscopicMap(spec, eps)
            est = detect_torus(
                smap, seed_pts, transient=transient or 2000, keep=iters,
                harmonics=harmonics, eps=eps,
            )
            rho = rotation_number(smap, est, rot_iters)
            rows.append({
                "eps": eps, "transient": transient or 2000, "keep": iters,
                "lanes": seed_pts.shape[0], "seeds_survived": est.seeds_survived,
                "fit_residual": est.fit_residual,
                "invariance_residual": est.invariance_residual,
                "distance": est.distance_to_unperturbed,
                "rho": rho.value, "rho_error": rho.error, "estimate": est,
            })
    else:
        raise click.UsageError("give exactly one of --system or --builtin")

    fp = config_fingerprint(config)
    header = ("eps", "distance", "invariance_residual", "fit_residual",
              "rho", "rho_error", "iterates_used", "seeds_survived")
    write_csv(
        out_dir / "torus_report.csv",
        header,
        (
            (
                r["eps"],
                r["distance"] if r["distance"] is not None else float("nan"),
                r["invariance_residual"],
                r["fit_residual"],
                r["rho"],
                r["rho_error"],
                r["estimate"].iterates_used,
                r["seeds_survived"],
            )
            for r in rows
        ),
        fingerprint=fp,
    )
    summary = {
        "fingerprint": fp,
        "config": config,
        "results": [
            {k: v for k, v in r.items() if k != "estimate"} for r in rows
        ],
    }
    if len(rows) >= 3:
        summary["rotation_fit"] = {
            k: (list(v) if isinstance(v, np.ndarray) else v)
            for k, v in rotation_scaling_fit(rows).items()
        }
    write_json(out_dir / "torus_summary.json", summary)
    click.echo(f"wrote {out_dir}/torus_report.csv and torus_summary.json (fingerprint {fp})")


@cli.command("probe")
@click.option("--mu", type=int, default=1, show_default=True)
@click.option("--eps", type=str, default="1/15", show_default=True)
@click.option("--radius", type=float, default=0.1, show_default=True)
@click.option("--trials", type=int, default=200, show_default=True)
@click.option("--horizon", type=int, default=4000, show_default=True)
@click.option("--rng-seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@guarded
def cmd_probe(mu, eps, radius, trials, horizon, rng_seed, out):
    """Empirical stability probe of the built-in system's invariant curve."""
    report, _ = probe_example4d(
        mu, eps=parse_number(eps), radius=radius, trials=trials,
        horizon=horizon, seed=rng_seed,
    )
    report["fingerprint"] = config_fingerprint(
        {k: v for k, v in report.items() if k != "classification"}
    )
    write_json(out, report)
    click.echo(
        f"mu={mu}: attracted {report['fraction_attracted']:.3f}, "
        f"escaped {report['fraction_escaped']:.3f} -> {report['classification']}"
    )


@cli.command("fig1")
@click.option("--out", type=click.Path(), required=True, help="output directory")
@guarded
def cmd_fig1(out):
    """Reproduce the long four-seed section-map experiment (CSV dumps plus a
    verdict JSON)."""
    verdict = reproduce_fig1(out)
    click.echo(
        f"bounded={verdict['bounded']} tube={verdict['residual']:.4f} "
        f"hausdorff_uv={verdict['hausdorff_uv']:.4f}; wrote {out}"
    )


def main():
    cli(prog_name="torusavg")


if __name__ == "__main__":
    main()
