import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from vosub.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, main
from vosub.config import ConfigError, load_config
from vosub.torus import read_grid_dump

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SOLVE = """\
[experiment]
task = solve

[symbol]
construction = expr
expr = xi**2

[grid]
N = 64

[task]
lambda = 1
f = exp(2*I*x)
"""


def run(task, config, tmp_path, *extra):
    return main([task, "--config", str(config), "--out", str(tmp_path / "out"), *extra])


def write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def csv_body(path):
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


# ---------------------------------------------------------------- config parsing

def test_line_numbers_in_errors(tmp_path):
    path = write(tmp_path, SOLVE.replace("N = 64", "N = many"))
    cfg = load_config(path)
    with pytest.raises(ConfigError, match=r"cfg\.ini:9: \[grid\] N"):
        cfg.torus_grid()


def test_unknown_section(tmp_path):
    with pytest.raises(ConfigError, match=r":3: unknown section \[bogus\]"):
        load_config(write(tmp_path, "[experiment]\ntask = solve\n[bogus]\n"))


def test_unknown_task(tmp_path):
    with pytest.raises(ConfigError, match="unknown task"):
        load_config(write(tmp_path, "[experiment]\ntask = fly\n"))


def test_missing_header(tmp_path):
    with pytest.raises(ConfigError, match="expected a \\[section\\] header"):
        load_config(write(tmp_path, "task = solve\n"))


def test_task_seeds_are_split_and_stable(tmp_path):
    cfg = load_config(write(tmp_path, "[experiment]\nseed = 5\n"))
    assert cfg.task_seed("garding") == cfg.task_seed("garding")
    assert cfg.task_seed("garding") != cfg.task_seed("feller")
    other = load_config(write(tmp_path, "[experiment]\nseed = 6\n", "b.ini"))
    assert other.task_seed("garding") != cfg.task_seed("garding")


@pytest.mark.parametrize("construction, point, expected", [
    ("expr\nexpr = (2 + sin(x))*xi**2", (0.0, 2.0), 8.0),
    ("psi", (0.0, 3.0), 9.0),
    ("hoh-power\nq = 1 + xi**2\nm = 1/2", (0.0, 1.0), 2 ** 0.5),
    ("subordinate\nq = 1 + xi**2", (0.0, 0.0), 1 - np.exp(-4)),
    ("inverse\ninverse_of = expr\nexpr = 1 + xi**2\nlambda = 1", (0.0, 0.0), 0.5),
])
def test_symbol_constructions(tmp_path, construction, point, expected):
    cfg = load_config(write(tmp_path, f"[family]\nalpha = 1\n[symbol]\nconstruction = {construction}\n"))
    assert cfg.symbol().at(*point) == pytest.approx(expected, rel=1e-14)


def test_symbol_domain_error_is_a_config_error(tmp_path):
    cfg = load_config(write(tmp_path, "[symbol]\nconstruction = subordinate\nq = xi**2 - 1\n"))
    with pytest.raises(ConfigError, match=r"\[symbol\] construction"):
        cfg.symbol()


def test_random_grid_function_is_seeded(tmp_path):
    cfg = load_config(write(tmp_path, "[task]\nf = random:8\n"))
    g = cfg.torus_grid()
    a = cfg.grid_function("task", "f", g, 3)
    b = cfg.grid_function("task", "f", g, 3)
    assert np.array_equal(a.values, b.values)
    assert a.is_real()


def test_grid_function_rejects_frequency_variable(tmp_path):
    cfg = load_config(write(tmp_path, "[task]\nf = xi*x\n"))
    with pytest.raises(ConfigError):
        cfg.grid_function("task", "f", cfg.torus_grid(), 0)


# ---------------------------------------------------------------- subcommands

def test_check_bernstein_on_damped_power(tmp_path, capsys):
    assert run("check-bernstein", CONFIGS / "bernstein_example.ini", tmp_path) == EXIT_PASS
    rows = csv_body(tmp_path / "out" / "check-bernstein.csv")
    assert all(",pass," in r for r in rows[1:])


def test_solve_writes_dump_with_expected_mode(tmp_path):
    assert run("solve", write(tmp_path, SOLVE), tmp_path) == EXIT_PASS
    u = read_grid_dump(tmp_path / "out" / "solution.tgf")
    assert abs(u.coefficient(2) - 0.2) <= 1e-10
    assert (tmp_path / "out" / "solve.csv").exists()


def test_check_symbol_order_deficit_fails(tmp_path, capsys):
    assert run("check-symbol", CONFIGS / "symbol_order_deficit.ini", tmp_path) == EXIT_FAIL
    assert "fail" in (tmp_path / "out" / "check-symbol.csv").read_text()
    assert "check-symbol: FAIL" in capsys.readouterr().out


def test_config_error_exit_code(tmp_path, capsys):
    path = write(tmp_path, "[experiment]\ntask = solve\n[bogus]\n")
    assert run("solve", path, tmp_path) == EXIT_CONFIG
    assert "bogus" in capsys.readouterr().err


def test_task_mismatch_is_config_error(tmp_path):
    assert run("evolve", write(tmp_path, SOLVE), tmp_path) == EXIT_CONFIG


def test_abort_exit_code(tmp_path):
    text = SOLVE.replace("expr = xi**2", "expr = (2 + sin(x))*xi**2").replace(
        "lambda = 1", "lambda = 1e-3\ntol = 1e-16\nmax_iter = 2")
    assert run("solve", write(tmp_path, text), tmp_path) == EXIT_ABORT


def test_dry_run_writes_nothing(tmp_path, capsys):
    assert run("solve", write(tmp_path, SOLVE), tmp_path, "--dry-run") == EXIT_PASS
    out = capsys.readouterr().out
    assert "grid: n=1 N=64" in out
    assert not (tmp_path / "out").exists()


def test_seed_override_changes_output(tmp_path):
    cfg = CONFIGS / "garding.ini"
    main(["garding", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["garding", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "1"])
    main(["garding", "--config", str(cfg), "--out", str(tmp_path / "c"), "--seed", "2"])
    a, b, c = (csv_body(tmp_path / d / "garding.csv") for d in "abc")
    assert a == b
    assert a[1].split(",")[0] != c[1].split(",")[0]


@pytest.mark.parametrize("task, config, files", [
    ("feller", "feller.ini", ["feller.csv", "feller-diagnostics.csv"]),
    ("evolve", "evolve.ini", ["evolve-diagnostics.csv"]),
    ("compose", "compose.ini", ["compose.csv"]),
])
def test_reruns_are_byte_identical(tmp_path, task, config, files):
    for d in ("a", "b"):
        assert main([task, "--config", str(CONFIGS / config), "--out", str(tmp_path / d)]) == EXIT_PASS
    for f in files:
        first = (tmp_path / "a" / f).read_text().splitlines()
        second = (tmp_path / "b" / f).read_text().splitlines()
        assert first[0].startswith("# vosub")
        assert first[1:] == second[1:]


@pytest.mark.parametrize("config, status", [
    ("reference_worked.ini", EXIT_PASS),
    ("reference_incompatible.ini", EXIT_FAIL),
    ("lambda_power.ini", EXIT_FAIL),
    ("variable_order_class.ini", EXIT_PASS),
])
def test_shipped_configs(tmp_path, config, status):
    task = load_config(CONFIGS / config).task
    assert run(task, CONFIGS / config, tmp_path) == status


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "vosub", "solve", "--config",
                           str(write(tmp_path, SOLVE)), "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "solve: PASS" in proc.stdout
