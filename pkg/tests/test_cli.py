"""Command-line interface: commands, exit codes, output formats."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from torusavg.cli import cli, parse_grid, parse_number

from helpers import SYNTH2D_ORDERS


@pytest.fixture()
def runner():
    return CliRunner()


def synth2d_toml(tmp_path):
    lines = ['name = "synth2d"', "n = 2", 'T = "2*pi"', "N = 3"]
    for i, comps in SYNTH2D_ORDERS.items():
        lines.append("[[order]]")
        lines.append(f"i = {i}")
        lines.append("components = [" + ", ".join(f'"{c}"' for c in comps) + "]")
    path = tmp_path / "synth2d.toml"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_parse_number_fractions():
    assert parse_number("1/15") == pytest.approx(1 / 15)
    assert parse_number("0.25") == 0.25


def test_parse_grid():
    pts = parse_grid("0:1:3,-1:1:2")
    assert pts.shape == (6, 2)


def test_bell_command(runner):
    res = runner.invoke(cli, ["bell", "3", "2", "1", "1"])
    assert res.exit_code == 0
    assert res.output.strip() == "3"
    res = runner.invoke(cli, ["bell", "1", "1", "5"])
    assert res.exit_code == 0
    assert res.output.strip() == "5.0" or res.output.strip() == "5"


def test_bell_usage_error(runner):
    res = runner.invoke(cli, ["bell", "2", "5", "1"])
    assert res.exit_code == 2


def test_melnikov_builtin_vanishing_order(runner, tmp_path):
    out = tmp_path / "mel.csv"
    res = runner.invoke(cli, [
        "melnikov", "--builtin", "example4d", "--order", "2",
        "--grid", "0.6:1.4:2,-0.8:0.8:2,-0.8:0.8:2", "--out", str(out),
    ])
    assert res.exit_code == 0, res.output
    data = np.loadtxt(out, delimiter=",", skiprows=2)
    assert data.shape == (8, 6)
    assert np.max(np.abs(data[:, 3:])) <= 1e-8


def test_melnikov_builtin_order_n1_value(runner, tmp_path):
    out = tmp_path / "mel3.csv"
    res = runner.invoke(cli, [
        "melnikov", "--builtin", "example4d", "--order", "3",
        "--grid", "1:1:1,1:1:1,0:0:1", "--out", str(out),
    ])
    assert res.exit_code == 0, res.output
    row = np.loadtxt(out, delimiter=",", skiprows=2)
    assert row[3:] == pytest.approx([0.0, 0.0, -np.pi], abs=1e-9)


def test_melnikov_zero_average_user_system(runner, tmp_path):
    cfg = tmp_path / "zero.toml"
    cfg.write_text(
        'n = 1\nT = "2*pi"\nN = 1\n[[order]]\ni = 1\ncomponents = ["sin(t)*x1"]\n'
    )
    out = tmp_path / "zero.csv"
    res = runner.invoke(cli, [
        "melnikov", "--system", str(cfg), "--order", "1",
        "--grid", "-1:1:5", "--out", str(out),
    ])
    assert res.exit_code == 0, res.output
    data = np.loadtxt(out, delimiter=",", skiprows=2)
    assert np.max(np.abs(data[:, 1])) <= 1e-10


def test_melnikov_averaged_hypothesis_violation(runner, tmp_path):
    cfg = synth2d_toml(tmp_path)
    res = runner.invoke(cli, [
        "melnikov", "--system", str(cfg), "--order", "2", "--averaged",
        "--grid", "-0.5:0.5:2,-0.5:0.5:2", "--out", str(tmp_path / "x.csv"),
    ])
    assert res.exit_code == 3
    assert "vanish" in res.output


def test_melnikov_requires_one_source(runner, tmp_path):
    res = runner.invoke(cli, [
        "melnikov", "--order", "1", "--grid", "0:1:2", "--out", str(tmp_path / "x.csv"),
    ])
    assert res.exit_code == 2


def test_cycle_builtin(runner, tmp_path):
    out = tmp_path / "cycle.json"
    res = runner.invoke(cli, [
        "cycle", "--builtin", "example4d-guiding", "--mu", "1",
        "--guess", "1.03,0.97,0.05", "--omega-guess", "76", "--out", str(out),
    ])
    assert res.exit_code == 0, res.output
    report = json.loads(out.read_text())
    assert report["hyperbolic"] is True
    assert report["omega"] == pytest.approx(8 * np.pi ** 2, rel=1e-9)
    assert report["det_check"] <= 1e-6
    mods = sorted(
        np.hypot(m["re"], m["im"])
        for i, m in enumerate(report["multipliers"])
        if i != report["trivial_index"]
    )
    assert mods[0] == pytest.approx(np.exp(-4 * np.pi), rel=1e-6)
    assert "fingerprint" in report


def test_cycle_no_cycle_exits_4(runner, tmp_path):
    field = tmp_path / "expansion.toml"
    field.write_text('components = ["x1", "x2"]\n')
    res = runner.invoke(cli, [
        "cycle", "--guiding-file", str(field),
        "--guess", "1,0.5", "--omega-guess", "5", "--out", str(tmp_path / "c.json"),
    ])
    assert res.exit_code == 4


def test_torus_guard_exits_5(runner, tmp_path):
    res = runner.invoke(cli, [
        "torus", "--builtin", "example4d", "--eps", "0.9",
        "--out", str(tmp_path / "t"),
    ])
    assert res.exit_code == 5


def test_torus_small_run_and_determinism(runner, tmp_path):
    args = [
        "torus", "--builtin", "example4d", "--eps", "1/15",
        "--transient", "400", "--iters", "300", "--rot-iters", "300",
        "--out", str(tmp_path / "t"),
    ]
    res = runner.invoke(cli, args)
    assert res.exit_code == 0, res.output
    report = (tmp_path / "t" / "torus_report.csv").read_text()
    summary = json.loads((tmp_path / "t" / "torus_summary.json").read_text())
    assert summary["results"][0]["seeds_survived"] == 48
    res2 = runner.invoke(cli, args)
    assert res2.exit_code == 0
    assert (tmp_path / "t" / "torus_report.csv").read_text() == report


def test_torus_generic_system(runner, tmp_path):
    cfg = tmp_path / "hopf.toml"
    cfg.write_text(
        'name = "hopf"\nn = 2\nT = "2*pi"\nN = 1\n[[order]]\ni = 1\n'
        'components = ["x1*(1 - x1^2 - x2^2) - x2", "x2*(1 - x1^2 - x2^2) + x1"]\n'
    )
    res = runner.invoke(cli, [
        "torus", "--system", str(cfg), "--eps", "0.0503",
        "--seeds", "1.15,0;-1.15,0", "--transient", "30", "--iters", "120",
        "--harmonics", "6", "--rot-iters", "100", "--out", str(tmp_path / "g"),
    ])
    assert res.exit_code == 0, res.output
    summary = json.loads((tmp_path / "g" / "torus_summary.json").read_text())
    assert abs(summary["results"][0]["rho"] - 0.0503) <= 1e-6


def test_torus_config_file(runner, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        'builtin = "example4d"\neps = "1/15"\ntransient = 400\niters = 300\n'
        f'rot_iters = 300\nout = "{tmp_path / "tc"}"\n'
    )
    res = runner.invoke(cli, ["torus", "--config", str(cfg)])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "tc" / "torus_report.csv").exists()
    # explicit flags win over the file
    res = runner.invoke(cli, [
        "torus", "--config", str(cfg), "--out", str(tmp_path / "tc2"),
    ])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "tc2" / "torus_report.csv").exists()
    # unknown keys are rejected
    bad = tmp_path / "bad.toml"
    bad.write_text("bogus = 1\n")
    res = runner.invoke(cli, ["torus", "--config", str(bad)])
    assert res.exit_code == 2


def test_probe_small(runner, tmp_path):
    out = tmp_path / "probe.json"
    res = runner.invoke(cli, [
        "probe", "--mu", "1", "--trials", "16", "--horizon", "50",
        "--rng-seed", "5", "--out", str(out),
    ])
    assert res.exit_code == 0, res.output
    report = json.loads(out.read_text())
    assert set(report) >= {
        "fraction_attracted", "fraction_escaped", "classification", "rng_seed",
    }
    assert report["rng_seed"] == 5


def test_fig1_command(runner, tmp_path):
    res = runner.invoke(cli, ["fig1", "--out", str(tmp_path / "f")])
    assert res.exit_code == 0, res.output
    verdict = json.loads((tmp_path / "f" / "fig1_verdict.json").read_text())
    assert verdict["bounded"] is True
    for k in range(4):
        assert (tmp_path / "f" / f"fig1_seed{k}.csv").exists()


def test_version(runner):
    res = runner.invoke(cli, ["--version"])
    assert res.exit_code == 0
