import json
from pathlib import Path

import numpy as np
import pytest

from minmaxsdp.finite_games import FiniteGame, LoomisGame
from minmaxsdp.problem_io import (InvariantViolation, ParseError, load_json, parse_problem,
                                  parse_profile)

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


def write(tmp_path, data, name="p.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return path


def test_example1_file():
    G = parse_problem(PROBLEMS / "example1_nash.json", "solve-nash")
    assert isinstance(G, FiniteGame) and G.players == 2 and G.actions == (2, 2)
    assert G.payoffs[0][0, 0] == 0.05 and G.payoffs[1][1, 1] == 0.76


def test_profile_not_summing_to_one(tmp_path):
    G = parse_problem(PROBLEMS / "example1_nash.json", "solve-nash")
    with pytest.raises(InvariantViolation, match=r"profile\[0\]"):
        parse_profile([[0.5, 0.4], [0.5, 0.5]], G)
    prof = parse_profile([[0.25, 0.75], [1.0, 0.0]], G)
    assert np.allclose(prof[0], [0.25, 0.75])


def test_malformed_exponent_names_term(tmp_path):
    data = {"n1": 1, "n2": 1, "box1": [[-1, 1]], "box2": [[-1, 1]], "k1": [], "k2": [],
            "payoff": [{"coef": 1, "exp": [1, 1]}, {"coef": 2, "exp": [1, 0, 0]}]}
    with pytest.raises(ParseError, match="payoff.*term 1"):
        parse_problem(write(tmp_path, data), "solve-zerosum-poly")


def test_loomis_nonpositive_entry(tmp_path):
    data = {"players": 2, "actions": [2, 2], "payoffs": {"0": [1, 0, 0, 1], "1": [0, 1, 1, 0]},
            "f": {"0": [1, 1, 1, 1], "1": [1, -2, 1, 1]}}
    with pytest.raises(InvariantViolation, match=r"f\[1\].*\[0, 1\]"):
        parse_problem(write(tmp_path, data), "solve-loomis")
    data["f"]["1"] = [1, 2, 1, 1]
    assert isinstance(parse_problem(write(tmp_path, data), "solve-loomis"), LoomisGame)


def test_invalid_json_reports_line(tmp_path):
    with pytest.raises(ParseError, match="line 2"):
        load_json(write(tmp_path, '{\n "players": ,\n}'))


def test_missing_field(tmp_path):
    with pytest.raises(ParseError, match="payoffs"):
        parse_problem(write(tmp_path, {"players": 2, "actions": [2, 2]}), "solve-nash")


def test_wrong_tensor_size(tmp_path):
    data = {"players": 2, "actions": [2, 3], "payoffs": [[1, 2, 3, 4], [1, 2, 3, 4, 5, 6]]}
    with pytest.raises(ParseError, match=r"payoffs\[0\]"):
        parse_problem(write(tmp_path, data), "solve-nash")


def test_one_based_player_keys(tmp_path):
    data = {"players": 2, "actions": [1, 2], "payoffs": {"1": [1, 2], "2": [3, 4]}}
    G = parse_problem(write(tmp_path, data), "solve-nash")
    assert G.payoffs[1][0, 1] == 4


def test_absorbing_finite_checks(tmp_path):
    base = {"players": 2, "actions": [1, 1], "payoffs": [[1], [1]], "f": [[2], [2]],
            "q": [0.5], "lambda": 0.5}
    assert parse_problem(write(tmp_path, base), "solve-absorbing-finite").discount == 0.5
    with pytest.raises(InvariantViolation, match="q"):
        parse_problem(write(tmp_path, {**base, "q": [1.5]}), "solve-absorbing-finite")
    with pytest.raises(InvariantViolation, match="lambda"):
        parse_problem(write(tmp_path, {**base, "lambda": 1.0}), "solve-absorbing-finite")


def test_mrf_file_and_bounds(tmp_path):
    prob, bounds = parse_problem(PROBLEMS / "rational_mrf.json", "solve-mrf")
    assert prob.nvars == 1 and len(prob.branches) == 2 and bounds is None
    data = json.loads((PROBLEMS / "rational_mrf.json").read_text())
    data["bounds"] = {"M1": 0.0, "M2": 1.0}
    with pytest.raises(InvariantViolation, match="bounds"):
        parse_problem(write(tmp_path, data), "solve-mrf")


def test_absorbing_poly_q_range(tmp_path):
    data = json.loads((PROBLEMS / "absorbing_poly.json").read_text())
    data["q"] = [{"coef": 1, "exp": [1, 0]}]
    with pytest.raises(InvariantViolation, match="q"):
        parse_problem(write(tmp_path, data), "solve-absorbing-poly")


@pytest.mark.parametrize("name,command", [
    ("example1_nash.json", "solve-nash"), ("matching_pennies.json", "solve-minmax"),
    ("loomis_2x2.json", "solve-loomis"), ("absorbing_finite.json", "solve-absorbing-finite"),
    ("bilinear_game.json", "solve-zerosum-poly"), ("distance_game.json", "solve-zerosum-poly"),
    ("absorbing_poly.json", "solve-absorbing-poly"), ("rational_mrf.json", "solve-mrf")])
def test_shipped_problems_parse(name, command):
    parse_problem(PROBLEMS / name, command)
