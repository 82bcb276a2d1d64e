import json
import subprocess
import sys

import numpy as np
import pytest

from ratevisc.cli import EXIT_CONFIG, EXIT_OK, main, read_curve_csv
from ratevisc.config import MeshRule, parse_config
from ratevisc.errors import ConfigError
from ratevisc.scenarios import get_scenario

INLINE = """\
# spring with dry friction, ramp then hold
[run]
eps = 0.2, 0.1, 0.05
mesh = c=0.5
seed = 3

[tolerances]
tol_inner = 1e-10

[problem]
dim = 2
A = 2, -0.5; -0.5, 1
r = 0.5, 1
F = zero

[load]
T = 1
segment = 0, 0.5 | 0 | 2, 1
segment = 0.5, 1 | 2, 0.5 | 0
jump = 0.5 | left
"""


def run_cli(tmp_path, *args):
    return main(["run", *args, "--out", str(tmp_path)])


@pytest.fixture(scope="module")
def play_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("play")
    code = main(["run", "--scenario", "play1d", "--eps", "0.2,0.1,0.05,0.025", "--mesh", "c=0.5", "--out", str(out)])
    return code, out


def test_play_run_end_to_end(play_run):
    code, out = play_run
    assert code == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["n_curves"] == 4 and report["status"] == "ok"
    for tag in ("0.2", "0.1", "0.05", "0.025"):
        assert (out / f"trajectory_eps{tag}.csv").exists()
        assert (out / f"curve_eps{tag}.csv").exists()
    for name in ("limit_curve.csv", "ledger.json", "certificates.json"):
        assert (out / name).exists()
    ids = [e["id"] for e in report["entries"]]
    assert len(ids) == len(set(ids))
    for e in report["entries"]:
        assert {"id", "lhs", "rhs", "margin", "pass"} <= set(e)
    assert {"state_bound", "increment_bound", "force_bound", "normalization", "edi", "lambda_inclusion"} <= set(ids)


def test_artifacts_are_deterministic(play_run, tmp_path):
    _, out = play_run
    assert run_cli(tmp_path, "--scenario", "play1d", "--eps", "0.2,0.1,0.05,0.025", "--mesh", "c=0.5") == EXIT_OK
    for f in sorted(out.glob("*.csv")):
        assert f.read_bytes() == (tmp_path / f.name).read_bytes(), f.name


def test_csv_round_trip_is_exact(play_run):
    _, out = play_run
    curve = read_curve_csv(out / "limit_curve.csv", get_scenario("play1d").problem)
    data = np.loadtxt(out / "limit_curve.csv", delimiter=",", skiprows=2)
    assert np.array_equal(curve.s, data[:, 0])
    assert np.array_equal(curve.z[:, 0], data[:, 2])


def test_increasing_eps_is_a_config_error(tmp_path, capsys):
    assert run_cli(tmp_path, "--scenario", "play1d", "--eps", "0.1,0.2") == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and err["field"] == "eps"


def test_unknown_scenario_and_coarse_mesh(tmp_path):
    assert run_cli(tmp_path, "--scenario", "nope") == EXIT_CONFIG
    assert run_cli(tmp_path, "--scenario", "play1d", "--eps", "0.1", "--mesh", "N=5") == EXIT_CONFIG
    assert run_cli(tmp_path, "--scenario", "play1d", "--mesh", "c=2") == EXIT_CONFIG


def test_certify_only_replays_doublewell(tmp_path):
    first = tmp_path / "first"
    assert main(["run", "--scenario", "doublewell1d", "--eps", "0.008,0.004", "--out", str(first)]) == EXIT_OK
    again = tmp_path / "again"
    code = main(["run", "--scenario", "doublewell1d", "--certify-only", str(first / "limit_curve.csv"),
                 "--out", str(again)])
    assert code == EXIT_OK
    original = json.loads((first / "certificates.json").read_text())["limit"]
    replay = json.loads((again / "certificates.json").read_text())["limit"]
    assert replay.keys() == original.keys()
    for key, value in original.items():
        if isinstance(value, float):
            assert replay[key] == pytest.approx(value, rel=1e-12, abs=1e-12), key
        else:
            assert replay[key] == value, key


def test_inline_problem_runs(tmp_path):
    cfg_path = tmp_path / "case.cfg"
    cfg_path.write_text(INLINE)
    cfg = parse_config(INLINE)
    assert cfg.problem.dim == 2 and cfg.seed == 3 and cfg.eps == (0.2, 0.1, 0.05)
    # the jump keeps the left limit as its value
    assert cfg.problem.load.eval(0.5) == pytest.approx([1.0, 0.5])
    assert cfg.problem.load.eval(0.5, "right") == pytest.approx([2.0, 0.5])
    code = main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["scenario"] == "inline" and report["dim"] == 2


@pytest.mark.parametrize("text, line, field", [
    ("[run]\nscenario = play1d\neps = 0.1, 0.2\n", 3, "eps"),
    ("[run]\nscenario = play1d\nmesh = q=3\n", 3, "mesh"),
    ("[run]\nscenario = play1d\nbogus = 1\n", 3, "bogus"),
    ("[nowhere]\n", 1, None),
    ("scenario = play1d\n", 1, None),
    ("[tolerances]\ntol_norm = -1\n", 2, "tol_norm"),
    ("[problem]\ndim = 1\nA = -1\nr = 1\n[load]\nsegment = 0, 1 | 0\n", 3, "A"),
    ("[problem]\ndim = 1\nA = 1\nr = 1\n[load]\nsegment = 0, 0.5 | 0\nsegment = 0.6, 1 | 0\n", 7, "segment"),
    ("[problem]\ndim = 1\nA = 1\nr = 1\n[load]\nsegment = 0, 1 | 0\njump = 0.5\n", 7, "jump"),
    ("[problem]\ndim = 2\nA = 1, 2, 3\nr = 1\n[load]\nsegment = 0, 1 | 0\n", 3, "A"),
])
def test_config_errors_name_line_and_field(text, line, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert info.value.field == field


def test_mesh_rule_parsing():
    assert MeshRule.parse("c=0.25") == MeshRule("c", 0.25)
    assert MeshRule.parse("N=200") == MeshRule("N", 200.0)
    assert str(MeshRule.parse("N=200")) == "N=200"
    with pytest.raises(ConfigError):
        MeshRule.parse("N=2.5")


def test_module_entry_point_lists_scenarios():
    out = subprocess.run([sys.executable, "-m", "ratevisc", "list"], capture_output=True, text=True, check=True)
    assert "play1d" in out.stdout.split() and "doublewell1d" in out.stdout.split()
