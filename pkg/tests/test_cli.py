import csv
import subprocess
import sys

import pytest

from borisamts.cli import TRACE_COLUMNS, main
from borisamts.core import DIAGNOSTICS_COLUMNS
from borisamts.model1d import SWEEP_COLUMNS

example = pytest.mark.example

BB_SOLENOID = """\
[bunch]
distribution = "gaussian"
n = 32
sigma = [1e-3, 1e-3, 1e-3]
momentum_spread = 1e-3
kinetic_energy = 1e5
total_charge = 0.0
seed = 3

[[external]]
type = "uniform_b"
b0 = [0.0, 0.0, 0.3]

[integrator]
method = "BB"
t_end = 1e-9
h = 1e-12

[diagnostics]
interval = 1e-10
"""

EXPANDING_SPHERE = """\
[bunch]
distribution = "cold_sphere"
n = 300
radius = 1e-3
kinetic_energy = 10.0
total_charge = 2e-11
seed = 5

[self_field]
solver = "direct"
softening = 2e-4

[integrator]
method = "AMTS"
t_end = 2e-9
dt_outer_init = 1e-11
dt_inner = 2e-12
"""


def read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def write_config(tmp_path, text, name="scenario.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


@example
def test_magnetic_only_run_keeps_energy(tmp_path):
    cfg = write_config(tmp_path, BB_SOLENOID)
    assert main(["--quiet", "run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read(tmp_path / "o" / "diagnostics.csv")
    assert tuple(rows[0]) == DIAGNOSTICS_COLUMNS
    energies = [float(r[DIAGNOSTICS_COLUMNS.index("energy_ev")]) for r in rows[1:]]
    assert max(abs(e / energies[0] - 1) for e in energies) < 1e-9
    times = [float(r[0]) for r in rows[1:]]
    assert len(times) == 11 and times[-1] == 1e-9
    assert all(a < b for a, b in zip(times, times[1:]))
    solves = [int(r[3]) for r in rows[1:]]
    assert solves == sorted(solves)
    assert tuple(read(tmp_path / "o" / "trace.csv")[0]) == TRACE_COLUMNS


@example
def test_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, EXPANDING_SPHERE)
    for out in ("a", "b"):
        assert main(["--quiet", "run", "--config", str(cfg), "--out", str(tmp_path / out)]) == 0
    for name in ("diagnostics.csv", "trace.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@example
def test_expanding_sphere_steps_increase(tmp_path):
    cfg = write_config(tmp_path, EXPANDING_SPHERE)
    assert main(["--quiet", "run", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read(tmp_path / "trace.csv")
    h = [float(r[TRACE_COLUMNS.index("h")]) for r in rows[1:-1]]
    assert all(a < b for a, b in zip(h[5:], h[6:]))


def test_seed_flag_changes_output(tmp_path):
    cfg = write_config(tmp_path, BB_SOLENOID)
    main(["--quiet", "run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["--quiet", "--seed", "9", "run", "--config", str(cfg), "--out", str(tmp_path / "b")])
    main(["--quiet", "run", "--seed", "9", "--config", str(cfg), "--out", str(tmp_path / "c")])
    a, b, c = (read(tmp_path / d / "diagnostics.csv") for d in "abc")
    assert a != b and b == c


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, BB_SOLENOID.replace("h = 1e-12", "h = -1e-12"))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "scenario.toml:" in err and "config error" in err


def test_missing_config_exit_code(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path)]) == 1


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 1


def test_numerical_breakdown_exit_code(tmp_path, capsys):
    # every particle at one point cannot be deposited on a mesh
    text = BB_SOLENOID.replace("sigma = [1e-3, 1e-3, 1e-3]", "sigma = [0.0, 0.0, 0.0]")
    text = text.replace("momentum_spread = 1e-3", "momentum_spread = 0.0")
    text = text.replace("total_charge = 0.0", "total_charge = 1e-12")
    text += '\n[self_field]\nsolver = "mesh"\n'
    cfg = write_config(tmp_path, text)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "numerical breakdown" in capsys.readouterr().err


def test_sweep_beta(tmp_path):
    assert main(["--quiet", "sweep-beta", "--out", str(tmp_path), "--energies", "10",
                 "--betas", "0", "1"]) == 0
    rows = read(tmp_path / "beta_sweep.csv")
    assert tuple(rows[0]) == SWEEP_COLUMNS and len(rows) == 3


def test_oracle1d(capsys):
    assert main(["oracle1d", "--x0", "2", "--v0", "-1", "--t", "0"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "x,v,t"
    x, v, t = map(float, lines[1].split(","))
    assert x == pytest.approx(2.0, rel=1e-14) and v == pytest.approx(-1.0, rel=1e-12)


def test_oracle1d_bad_input():
    assert main(["oracle1d", "--x0", "-1", "--v0", "0", "--t", "1"]) == 1


def test_error_vs_work_small(tmp_path):
    cfg = write_config(tmp_path, EXPANDING_SPHERE)
    args = ["--quiet", "error-vs-work", "--config", str(cfg), "--methods", "MTS", "AMTS",
            "--budgets", "8", "--reference-solves", "30", "--out", str(tmp_path)]
    assert main(args) == 0
    rows = read(tmp_path / "error_vs_work.csv")
    assert rows[0] == ["run_id", "method", "work", "solves", "emittance", "error"]
    assert [r[0] for r in rows[1:]] == ["reference", "MTS@8", "AMTS:beta=1@8"]
    assert (tmp_path / "timings.csv").exists()


def test_error_vs_work_bad_method(tmp_path):
    cfg = write_config(tmp_path, EXPANDING_SPHERE)
    assert main(["error-vs-work", "--config", str(cfg), "--methods", "RK4",
                 "--out", str(tmp_path)]) == 1


def test_mts_vs_stale_small(tmp_path):
    text = BB_SOLENOID.replace("total_charge = 0.0", "total_charge = 1e-12")
    cfg = write_config(tmp_path, text)
    args = ["--quiet", "mts-vs-stale", "--config", str(cfg), "--periods", "1", "2",
            "--checkpoints", "4", "--out", str(tmp_path)]
    assert main(args) == 0
    mts = read(tmp_path / "mts_table.csv")
    stale = read(tmp_path / "stale_table.csv")
    assert [r[0] for r in mts[1:]] == ["reference", "MTS@1", "MTS@2", "no-SC@0"]
    assert [r[0] for r in stale[1:]] == ["reference", "BBStale@1", "BBStale@2", "no-SC@0"]


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "borisamts", "oracle1d", "--x0", "1",
                          "--v0", "0", "--t", "0"], capture_output=True, text=True)
    assert out.returncode == 0
    assert [float(v) for v in out.stdout.splitlines()[1].split(",")] == [1.0, 0.0, 0.0]


def test_builtin_scenario_name(tmp_path, monkeypatch):
    import borisamts.cli as cli
    from borisamts.scenario import drift_expansion
    import dataclasses

    def tiny():
        sc = drift_expansion(n=16)
        return dataclasses.replace(sc, integrator=dataclasses.replace(sc.integrator, t_end=1e-10))

    monkeypatch.setitem(cli.BUILTIN, "drift-expansion", tiny)
    monkeypatch.chdir(tmp_path)
    assert main(["--quiet", "run", "--config", "drift-expansion", "--out", "o"]) == 0
