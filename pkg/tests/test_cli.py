import json
import subprocess
import sys
from pathlib import Path

import pytest

from minmaxsdp.cli import RunConfig, emit_machine, main, parse_machine, render_text, run

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


def cfg(command, name, **kw):
    return RunConfig(command, str(PROBLEMS / name), **kw)


def test_example1_nash_order3():
    rep = run(cfg("solve-nash", "example1_nash.json", order=3))
    assert rep.exit_code == 0 and rep.status == "certified"
    assert len(rep.result["profiles"]) == 3
    assert "equilibria (3)" in render_text(rep)


def test_bilinear_game_value_zero():
    rep = run(cfg("solve-zerosum-poly", "bilinear_game.json"))
    assert rep.exit_code == 0 and abs(rep.result["value"]) < 1e-6


def test_rmax_below_r0_is_input_error():
    rep = run(cfg("solve-mrf", "rational_mrf.json", max_order=1))
    assert rep.exit_code == 4 and "minimal order" in rep.result["error"]


def test_missing_file_is_input_error():
    assert run(RunConfig("solve-nash", "/nonexistent/file.json")).exit_code == 4


def test_bad_options():
    assert run(cfg("solve-nash", "example1_nash.json", tol=2.0)).exit_code == 4
    assert run(cfg("solve-zerosum-poly", "bilinear_game.json", perturb=1e-3)).exit_code == 4
    assert run(cfg("solve-minmax", "matching_pennies.json", player=5)).exit_code == 4


def test_uncertified_exit_code():
    # order 2 alone is not flat for this Loomis game
    rep = run(cfg("solve-loomis", "loomis_2x2.json", order=2))
    assert rep.exit_code == 2 and rep.status in ("converged", "max-order")


@pytest.mark.parametrize("command,name", [
    ("solve-nash", "example1_nash.json"), ("solve-minmax", "matching_pennies.json"),
    ("solve-loomis", "loomis_2x2.json"), ("solve-absorbing-finite", "absorbing_finite.json"),
    ("solve-zerosum-poly", "distance_game.json"), ("solve-absorbing-poly", "absorbing_poly.json"),
    ("solve-mrf", "rational_mrf.json")])
def test_machine_round_trip_and_determinism(command, name):
    a = run(cfg(command, name, format="machine")).machine()
    b = run(cfg(command, name, format="machine")).machine()
    assert a == b
    assert emit_machine(parse_machine(a)) == a
    data = parse_machine(a)
    assert data["exit_code"] == 0
    assert "timings" not in data and "seconds" not in a


def test_machine_output_has_moment_vector():
    data = parse_machine(run(cfg("solve-nash", "example1_nash.json", order=3)).machine())
    mom = data["result"]["moments"]
    assert mom["order"] == 6 and len(mom["values"]) > 1 and mom["values"][0] == pytest.approx(1.0)


def test_export_sdp(tmp_path):
    out = tmp_path / "relax.dat-s"
    rep = run(cfg("solve-zerosum-poly", "distance_game.json", export_sdp=str(out)))
    assert rep.exit_code == 0 and out.read_text().startswith("* problem")


def test_main_and_module_entry(capsys):
    code = main(["solve-minmax", str(PROBLEMS / "matching_pennies.json"), "--format", "machine"])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["status"] == "certified"
    proc = subprocess.run([sys.executable, "-m", "minmaxsdp", "solve-mrf",
                           str(PROBLEMS / "rational_mrf.json"), "--max-order", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 4


def test_help_lists_defaults():
    proc = subprocess.run([sys.executable, "-m", "minmaxsdp", "--help"], capture_output=True, text=True)
    assert "1e-08" in proc.stdout and "1e-06" in proc.stdout and "--export-sdp" in proc.stdout
