"""Config parsing, recipe orchestration, reporting, and the CLI surface."""

import json
import os

import numpy as np
import pytest

from kinchaos.cli import main as cli_main
from kinchaos.errors import ConfigError
from kinchaos.harness import parse_config, run_experiment, write_report

MINIMAL_ERGODICITY = """
[experiment]
recipe = ergodicity
seed = 3

[numerics]
N = 16
T = 4.0
"""

CHAOS_SMALL = """
[experiment]
recipe = chaos_scaling
seed = 5

[numerics]
N_list = [8, 16, 32, 64]
N_mc_list = [8, 32]
n_mc = 4
n_cloud = 2048
"""

CONCENTRATION_SMALL = """
[experiment]
recipe = concentration
seed = 7

[potential]
v_family = quadratic
v_curvature = 1.0
w_family = mollified_coulomb
w_a = 0.2
w_b = 1.0
w_k = 2.0

[numerics]
N_list = [8, 16, 32, 64]
n_mc = 40
"""


def run_to_dir(text, out_dir, threads=1):
    report = run_experiment(parse_config(text), threads=threads)
    return report, write_report(report, str(out_dir))


def read_outputs(paths):
    out = {}
    for p in paths:
        if p.endswith(".csv"):
            with open(p, "rb") as fh:
                out[os.path.basename(p)] = fh.read()
    return out


# --- parse_config -------------------------------------------------------------

def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL_ERGODICITY)
    assert cfg.recipe == "ergodicity"
    assert cfg.seed == 3
    assert cfg.numerics["N"] == 16
    assert cfg.numerics["dt"] == 0.01           # default filled
    assert cfg.potential["w_family"] == "harmonic_W"
    assert cfg.model["gamma"] == 1.0


def test_unknown_recipe_rejected_with_line():
    bad = "[experiment]\nrecipe = bogus\n"
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    assert "unknown recipe" in str(err.value)
    assert "line 2" in str(err.value)


def test_list_key_rejected_for_scalar_recipe():
    bad = MINIMAL_ERGODICITY + "N_list = [8, 16]\n"
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    assert "N_list" in str(err.value)


def test_duplicate_key_rejected_with_both_lines():
    bad = "[experiment]\nrecipe = ergodicity\nseed = 1\nseed = 2\n"
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    msg = str(err.value)
    assert "line 3" in msg and "line 4" in msg


def test_type_mismatch_and_unknown_key_collected_together():
    bad = ("[experiment]\nrecipe = ergodicity\n"
           "[numerics]\nN = hello\nbogus_key = 3\n")
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    msg = str(err.value)
    assert "N" in msg and "bogus_key" in msg


def test_non_gaussian_family_rejected_for_ergodicity():
    bad = ("[experiment]\nrecipe = ergodicity\n"
           "[potential]\nv_family = power_k\nv_k = 4\n")
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    assert "closed-form Gaussian" in str(err.value)


# --- recipes and reports --------------------------------------------------------

def test_ergodicity_small_run(tmp_path):
    report, paths = run_to_dir(MINIMAL_ERGODICITY, tmp_path)
    assert report.recipe == "ergodicity"
    names = {v["name"] for v in report.verdicts}
    assert "w2_reaches_floor" in names
    assert "rate_at_least_thm13_c" in names
    assert any(p.endswith("report.json") for p in paths)
    with open(os.path.join(tmp_path, "report.json")) as fh:
        blob = json.load(fh)
    assert blob["recipe"] == "ergodicity"
    assert blob["seed"] == 3


def test_csv_header_and_determinism(tmp_path):
    _, paths_a = run_to_dir(CHAOS_SMALL, tmp_path / "a")
    _, paths_b = run_to_dir(CHAOS_SMALL, tmp_path / "b")
    blobs_a = read_outputs(paths_a)
    blobs_b = read_outputs(paths_b)
    assert blobs_a.keys() == blobs_b.keys() and blobs_a
    for name in blobs_a:
        assert blobs_a[name] == blobs_b[name], name
        head = blobs_a[name].decode().splitlines()[0]
        assert head.startswith("# recipe=chaos_scaling seed=5 rng=philox")


def test_thread_count_does_not_change_output(tmp_path):
    _, paths_a = run_to_dir(CONCENTRATION_SMALL, tmp_path / "t1", threads=1)
    _, paths_b = run_to_dir(CONCENTRATION_SMALL, tmp_path / "t4", threads=4)
    blobs_a = read_outputs(paths_a)
    blobs_b = read_outputs(paths_b)
    assert blobs_a.keys() == blobs_b.keys() and blobs_a
    for name in blobs_a:
        assert blobs_a[name] == blobs_b[name], name


def test_constants_table_recipe(tmp_path):
    report, _ = run_to_dir("[experiment]\nrecipe = constants_table\n",
                           tmp_path)
    assert report.passed()
    cols, rows = report.tables["constants"]
    assert len(rows) >= 3


def test_assumptions_recipe_baseline(tmp_path):
    report, _ = run_to_dir("[experiment]\nrecipe = assumptions\n", tmp_path)
    verdicts = {v["name"]: v for v in report.verdicts}
    assert verdicts["A1"]["passed"] and verdicts["A4"]["passed"]
    assert not verdicts["A5"]["passed"]     # harmonic W: honest failure


def test_verdicts_recomputable_from_series(tmp_path):
    report, _ = run_to_dir(MINIMAL_ERGODICITY, tmp_path)
    cols, rows = report.tables["w2_series"]
    w2 = [row[cols.index("w2")] for row in rows]
    recomputed = w2[-1] <= report.scalars["threshold"]
    verdict = next(v for v in report.verdicts
                   if v["name"] == "w2_reaches_floor")
    assert verdict["passed"] == recomputed
    assert report.scalars["threshold"] == 2.0 * report.scalars["floor"]


# --- CLI -------------------------------------------------------------------------

def write_cfg(tmp_path, text):
    path = tmp_path / "cfg.ini"
    path.write_text(text)
    return str(path)


def test_cli_run_ok(tmp_path, capsys):
    cfg = write_cfg(tmp_path, MINIMAL_ERGODICITY)
    code = cli_main(["run", cfg, "--out-dir", str(tmp_path / "out")])
    assert code == 0
    assert (tmp_path / "out" / "report.json").exists()


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[experiment]\nrecipe = bogus\n")
    assert cli_main(["run", cfg]) == 2
    assert "unknown recipe" in capsys.readouterr().err


def test_cli_numerical_failure_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, """
[experiment]
recipe = meanfield_decay

[numerics]
dt = 0.2
T = 0.4
""")
    assert cli_main(["run", cfg, "--out-dir", str(tmp_path / "out")]) == 4
    assert "numerical failure" in capsys.readouterr().err


def test_cli_strict_assumptions_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[experiment]\nrecipe = assumptions\n")
    code = cli_main(["run", cfg, "--strict",
                     "--out-dir", str(tmp_path / "out")])
    assert code == 3


def test_cli_constants_subcommand(capsys):
    assert cli_main(["constants", "--gamma", "1", "--sigma", "1",
                     "--c-k", "0.25", "--c-v", "1"]) == 0
    out = capsys.readouterr().out
    assert "0.0017715419501" in out      # thm13 delta for these inputs
    assert '"rate"' in out


def test_cli_check_assumptions_subcommand(capsys):
    code = cli_main(["check-assumptions", "--v-family", "power_k",
                     "--param", "v_k=4", "--theta", "0.25"])
    assert code == 0
    out = capsys.readouterr().out
    assert "A3" in out and "A2" in out


def test_cli_check_assumptions_strict_failure(capsys):
    code = cli_main(["check-assumptions", "--v-family", "power_k",
                     "--param", "v_k=4", "--theta", "0.25", "--strict"])
    assert code == 3    # A2 fails for a genuinely superquadratic potential


def test_cli_version(capsys):
    assert cli_main(["version"]) == 0
    assert capsys.readouterr().out.strip()


def test_cli_seed_flag_overrides(tmp_path):
    cfg = write_cfg(tmp_path, MINIMAL_ERGODICITY)
    assert cli_main(["run", cfg, "--seed", "99",
                     "--out-dir", str(tmp_path / "o")]) == 0
    with open(tmp_path / "o" / "report.json") as fh:
        assert json.load(fh)["seed"] == 99
