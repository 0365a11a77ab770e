import json
import os
import subprocess
import sys

import pytest

from semilt.cli import RunConfig, build_config, main
from semilt.experiments import experiment_names

SMALL = ["--steps", "256", "--paths", "64", "--shard-size", "32"]


def run_cli(tmp_path, *args):
    return main(list(args) + ["--out", str(tmp_path)])


def test_list(capsys):
    assert main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [ln.split("\t")[0] for ln in lines] == experiment_names()


def test_experiment_writes_report(tmp_path, capsys):
    code = run_cli(tmp_path, "experiment", "skew_law", *SMALL, "--beta", "0.5")
    out = capsys.readouterr().out
    report = json.loads((tmp_path / "skew_law.json").read_text())
    assert code == (0 if report["passed"] else 1)
    assert out.strip().endswith("PASS" if report["passed"] else "FAIL")
    assert report["config"]["params"]["beta"] == "0.5"
    assert (tmp_path / "skew_law_residuals.csv").read_text().startswith("path_index")
    assert sorted(os.listdir(tmp_path)) == ["skew_law.json", "skew_law_residuals.csv"]


def test_reports_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        run_cli(d, "experiment", "gen_tanaka", *SMALL, "--z=0.2,inf")
    for f in ("gen_tanaka.json", "gen_tanaka_residuals.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_echo_round_trip(tmp_path):
    run_cli(tmp_path, "experiment", "comparison_main", *SMALL, "--ratio", "0.25")
    echo = json.loads((tmp_path / "comparison_main.json").read_text())["config"]
    cfg = RunConfig.from_echo(echo)
    direct = build_config(["experiment", "comparison_main", *SMALL, "--ratio", "0.25"])
    assert cfg.experiment_spec().echo() == direct.experiment_spec().echo()
    assert RunConfig.from_echo(cfg.experiment_spec().echo()) == cfg


def test_config_file(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nseed = 7\npaths = 64\ndt = 0.00390625\n\n[params]\nbeta = -0.5\n")
    cfg = build_config(["experiment", "skew_law", "--config", str(ini), "--steps", "128"])
    assert (cfg.seed, cfg.paths, cfg.steps) == (7, 64, 128)
    assert dict(cfg.params)["beta"] == "-0.5"


@pytest.mark.parametrize("args", [
    ["experiment", "nope"],
    ["experiment", "skew_law", "--bogus", "1"],
    ["experiment", "skew_law", "--beta", "2"],
    ["experiment", "skew_law", "--dt", "0.3"],
    ["experiment"],
    ["frobnicate"],
    ["localtime", "kernel"],
    ["simulate", "levy"],
    ["experiment", "skew_law", "--paths", "1"],
])
def test_usage_errors(tmp_path, capsys, args):
    # the offending flag comes last so that it wins over the defaults
    assert run_cli(tmp_path, *args[:2], *SMALL, *args[2:]) == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("semilt: error:") and "\n" not in err


def test_unknown_config_key(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[run]\ncolour = blue\n")
    assert run_cli(tmp_path, "experiment", "skew_law", "--config", str(ini)) == 2


@pytest.mark.parametrize("family", ["brownian", "euler", "reflected", "skew", "drift_solver",
                                    "barlow", "perturbed_tanaka"])
def test_simulate(tmp_path, family):
    assert run_cli(tmp_path, "simulate", family, "--steps", "64", "--paths", "3") == 0
    lines = (tmp_path / f"simulate_{family}.csv").read_text().splitlines()
    assert lines[0] == "time_index,t,path_0,path_1,path_2"
    assert len(lines) == 66


@pytest.mark.parametrize("est", ["occupation", "upcrossing", "tanaka_symmetric"])
def test_localtime(tmp_path, est):
    assert run_cli(tmp_path, "localtime", est, "--steps", "256", "--paths", "2") == 0
    lines = (tmp_path / f"localtime_{est}.csv").read_text().splitlines()
    assert len(lines) == 258
    assert float(lines[1].split(",")[2]) == 0.0


def test_failure_exit_code(tmp_path):
    # a vanishing tolerance turns estimator-mediated checks red
    code = run_cli(tmp_path, "experiment", "barlow", *SMALL, "--tol-scale", "1e-9")
    assert code == 1


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "semilt", "list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "skew_law" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "semilt", "experiment", "nope", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
