"""JSON problem files for every solver pipeline.

Polynomials are term lists ``[{"coef": c, "exp": [e1, ..., en]}, ...]``; a bare
number is accepted as a constant. Each parser validates the data completely
and raises :class:`ParseError` (naming the field) for malformed input or
:class:`InvariantViolation` (naming the entry) for well-formed but invalid data.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .absorbing import AbsorbingGameError, PolynomialAbsorbingGame
from .finite_games import (FiniteAbsorbingGame, FiniteGame, GameError, LoomisGame,
                           validate_profile)
from .mrf import MrfError, MrfProblem
from .polycore import Polynomial, PolynomialError, RationalFunction, SemiAlgebraicSet
from .polygame import GameInputError, PolynomialGame


class InputError(ValueError):
    """Base class for problem-file errors."""


class ParseError(InputError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class InvariantViolation(InputError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


COMMANDS = ("solve-mrf", "solve-nash", "solve-minmax", "solve-loomis",
            "solve-absorbing-finite", "solve-zerosum-poly", "solve-absorbing-poly")


# ---------------------------------------------------------------------------
# primitives


def load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(str(path), f"cannot read file ({exc.strerror})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}", f"invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise ParseError("<root>", "problem file must hold a JSON object")
    return data


def _require(data: dict, key: str):
    if key not in data:
        raise ParseError(key, "missing required field")
    return data[key]


def parse_polynomial(data, nvars: int | None, field: str) -> Polynomial:
    try:
        return Polynomial.from_json(data, nvars)
    except PolynomialError as exc:
        raise ParseError(field, str(exc)) from exc


def _parse_int(data, field: str, minimum: int = 0) -> int:
    if isinstance(data, bool) or not isinstance(data, int) or data < minimum:
        raise ParseError(field, f"expected an integer >= {minimum}, got {data!r}")
    return data


def _parse_float(data, field: str) -> float:
    if isinstance(data, bool) or not isinstance(data, (int, float, str)):
        raise ParseError(field, f"expected a number, got {data!r}")
    try:
        val = float(data)
    except ValueError as exc:
        raise ParseError(field, f"expected a number, got {data!r}") from exc
    if not np.isfinite(val):
        raise ParseError(field, f"non-finite number {data!r}")
    return val


def parse_box(data, nvars: int, field: str) -> tuple | None:
    if data is None:
        return None
    if not isinstance(data, list) or len(data) != nvars:
        raise ParseError(field, f"box must list {nvars} [lo, hi] pairs")
    box = []
    for i, pair in enumerate(data):
        if not isinstance(pair, list) or len(pair) != 2:
            raise ParseError(f"{field}[{i}]", f"expected [lo, hi], got {pair!r}")
        lo, hi = (_parse_float(v, f"{field}[{i}]") for v in pair)
        if lo > hi:
            raise InvariantViolation(f"{field}[{i}]", f"lower bound {lo} exceeds upper bound {hi}")
        box.append((lo, hi))
    return tuple(box)


def parse_set(data, nvars: int, box, field: str) -> SemiAlgebraicSet:
    if not isinstance(data, list):
        raise ParseError(field, "expected a list of constraint polynomials")
    cons = tuple(parse_polynomial(g, nvars, f"{field}[{j}]") for j, g in enumerate(data))
    return SemiAlgebraicSet(nvars, cons, box)


def parse_rational(data, nvars: int, field: str) -> RationalFunction:
    if isinstance(data, dict):
        p = parse_polynomial(_require_in(data, "p", field), nvars, f"{field}.p")
        q = parse_polynomial(data.get("q", 1.0), nvars, f"{field}.q")
    else:
        p = parse_polynomial(data, nvars, field)
        q = Polynomial.constant(nvars, 1.0)
    try:
        return RationalFunction(p, q)
    except PolynomialError as exc:
        raise InvariantViolation(field, str(exc)) from exc


def _require_in(data: dict, key: str, field: str):
    if key not in data:
        raise ParseError(f"{field}.{key}", "missing required field")
    return data[key]


def _infer_nvars(data: dict) -> int:
    if "nvars" in data:
        return _parse_int(data["nvars"], "nvars", 1)
    for key in ("set", "f0"):
        src = data.get(key)
        if isinstance(src, dict):
            src = src.get("p")
        for term in src if isinstance(src, list) else []:
            if isinstance(term, dict) and isinstance(term.get("exp"), list):
                return len(term["exp"])
            if isinstance(term, list):
                for t in term:
                    if isinstance(t, dict) and isinstance(t.get("exp"), list):
                        return len(t["exp"])
    if data.get("box") is not None and isinstance(data["box"], list):
        return len(data["box"])
    raise ParseError("nvars", "cannot infer the number of variables; add an 'nvars' field")


# ---------------------------------------------------------------------------
# MRF files


def parse_mrf(data: dict) -> tuple[MrfProblem, tuple | None]:
    """MRF problem and optional user bounds (M1, M2)."""
    n = _infer_nvars(data)
    box = parse_box(data.get("box"), n, "box")
    K = parse_set(data.get("set", []), n, box, "set")
    f0 = parse_rational(_require(data, "f0"), n, "f0")
    branches = data.get("branches", [])
    if not isinstance(branches, list):
        raise ParseError("branches", "expected a list of {p, q} objects")
    fs = [parse_rational(b, n, f"branches[{i}]") for i, b in enumerate(branches)]
    bounds = None
    if data.get("bounds") is not None:
        bd = data["bounds"]
        if not isinstance(bd, dict):
            raise ParseError("bounds", "expected {\"M1\": ..., \"M2\": ...}")
        M1 = _parse_float(_require_in(bd, "M1", "bounds"), "bounds.M1")
        M2 = _parse_float(_require_in(bd, "M2", "bounds"), "bounds.M2")
        if M1 < M2:
            raise InvariantViolation("bounds", f"M1 = {M1} is below M2 = {M2}")
        bounds = (M1, M2)
    try:
        prob = MrfProblem(K, f0, tuple(fs))
    except MrfError as exc:
        raise InvariantViolation("<problem>", str(exc)) from exc
    return prob, bounds


# ---------------------------------------------------------------------------
# finite games


def _player_tensors(data, players: int, actions: tuple, field: str) -> list[np.ndarray]:
    """Per-player tensors given as a list or a dict keyed by player (0- or 1-based)."""
    if isinstance(data, dict):
        keys = sorted(data, key=lambda k: (len(str(k)), str(k)))
        if set(map(str, keys)) == {str(i) for i in range(players)}:
            items = [data[str(i)] for i in range(players)]
        elif set(map(str, keys)) == {str(i + 1) for i in range(players)}:
            items = [data[str(i + 1)] for i in range(players)]
        else:
            raise ParseError(field, f"keys must be players 0..{players - 1} or 1..{players}")
    elif isinstance(data, list) and len(data) == players:
        items = data
    else:
        raise ParseError(field, f"expected one tensor per player ({players})")
    size = int(np.prod(actions))
    out = []
    for i, t in enumerate(items):
        f = f"{field}[{i}]"
        arr = _flat_numbers(t, f)
        if arr.size != size:
            raise ParseError(f, f"expected {size} entries for actions {list(actions)}, got {arr.size}")
        out.append(arr.reshape(actions))
    return out


def _flat_numbers(data, field: str) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise ParseError(field, "expected a flat list of numbers") from exc
    if not np.all(np.isfinite(arr)):
        raise ParseError(field, "non-finite entry")
    return arr


def _game_header(data: dict) -> tuple[int, tuple]:
    N = _parse_int(_require(data, "players"), "players", 1)
    acts = _require(data, "actions")
    if not isinstance(acts, list) or len(acts) != N:
        raise ParseError("actions", f"expected {N} action counts")
    return N, tuple(_parse_int(a, f"actions[{i}]", 1) for i, a in enumerate(acts))


def parse_finite_game(data: dict) -> FiniteGame:
    N, acts = _game_header(data)
    pays = _player_tensors(_require(data, "payoffs"), N, acts, "payoffs")
    try:
        return FiniteGame(acts, pays)
    except GameError as exc:
        raise InvariantViolation("payoffs", str(exc)) from exc


def parse_profile(data, G: FiniteGame, field: str = "profile") -> list[np.ndarray]:
    """Mixed profile, one probability vector per player."""
    if not isinstance(data, list) or len(data) != G.players:
        raise ParseError(field, f"expected {G.players} probability vectors")
    prof = []
    for i, row in enumerate(data):
        arr = _flat_numbers(row, f"{field}[{i}]")
        if arr.size != G.actions[i]:
            raise ParseError(f"{field}[{i}]", f"expected {G.actions[i]} probabilities")
        if np.any(arr < -1e-9):
            raise InvariantViolation(f"{field}[{i}]", f"negative probability in {arr.tolist()}")
        if abs(arr.sum() - 1.0) > 1e-9:
            raise InvariantViolation(f"{field}[{i}]", f"probabilities sum to {arr.sum():.12g}, not 1")
        prof.append(arr)
    return validate_profile(G, prof)


def parse_loomis(data: dict) -> LoomisGame:
    G = parse_finite_game(data)
    dens = _player_tensors(_require(data, "f"), G.players, G.actions, "f")
    for i, f in enumerate(dens):
        if np.any(f <= 0):
            idx = np.unravel_index(int(np.argmin(f)), f.shape)
            raise InvariantViolation(f"f[{i}]", f"entry {list(map(int, idx))} = {f[idx]:g} is not positive")
    return LoomisGame(G, tuple(dens))


def parse_absorbing_finite(data: dict) -> FiniteAbsorbingGame:
    G = parse_finite_game(data)
    f = _player_tensors(_require(data, "f"), G.players, G.actions, "f")
    q = _flat_numbers(_require(data, "q"), "q")
    if q.size != int(np.prod(G.actions)):
        raise ParseError("q", f"expected {int(np.prod(G.actions))} entries")
    q = q.reshape(G.actions)
    if np.any(q < 0) or np.any(q > 1):
        bad = np.argwhere((q < 0) | (q > 1))[0]
        raise InvariantViolation("q", f"entry {bad.tolist()} = {q[tuple(bad)]:g} is outside [0, 1]")
    lam = _parse_float(_require(data, "lambda"), "lambda")
    if not 0.0 < lam < 1.0:
        raise InvariantViolation("lambda", f"{lam} is not in (0, 1)")
    return FiniteAbsorbingGame(G, tuple(f), q, lam)


# ---------------------------------------------------------------------------
# polynomial games


def _poly_game_parts(data: dict):
    n1 = _parse_int(_require(data, "n1"), "n1", 1)
    n2 = _parse_int(_require(data, "n2"), "n2", 1)
    box1 = parse_box(data.get("box1"), n1, "box1")
    box2 = parse_box(data.get("box2"), n2, "box2")
    K1 = parse_set(data.get("k1", []), n1, box1, "k1")
    K2 = parse_set(data.get("k2", []), n2, box2, "k2")
    return n1, n2, K1, K2


def parse_poly_game(data: dict) -> PolynomialGame:
    n1, n2, K1, K2 = _poly_game_parts(data)
    p = parse_polynomial(_require(data, "payoff"), n1 + n2, "payoff")
    minimizes = data.get("first_player", "min")
    if minimizes not in ("min", "max"):
        raise ParseError("first_player", f"expected 'min' or 'max', got {minimizes!r}")
    try:
        return PolynomialGame(K1, K2, p, first_player_minimizes=minimizes == "min")
    except GameInputError as exc:
        raise InvariantViolation("<game>", str(exc)) from exc


def parse_poly_absorbing(data: dict) -> PolynomialAbsorbingGame:
    n1, n2, K1, K2 = _poly_game_parts(data)
    n = n1 + n2
    g = parse_polynomial(_require(data, "payoff"), n, "payoff")
    f = parse_polynomial(_require(data, "f"), n, "f")
    q = parse_polynomial(_require(data, "q"), n, "q")
    lam = _parse_float(_require(data, "lambda"), "lambda")
    if not 0.0 < lam < 1.0:
        raise InvariantViolation("lambda", f"{lam} is not in (0, 1)")
    try:
        return PolynomialAbsorbingGame(K1, K2, g, f, q, lam)
    except AbsorbingGameError as exc:
        raise InvariantViolation("q" if "q " in str(exc) else "<game>", str(exc)) from exc


_PARSERS = {
    "solve-mrf": parse_mrf,
    "solve-nash": parse_finite_game,
    "solve-minmax": parse_finite_game,
    "solve-loomis": parse_loomis,
    "solve-absorbing-finite": parse_absorbing_finite,
    "solve-zerosum-poly": parse_poly_game,
    "solve-absorbing-poly": parse_poly_absorbing,
}


def parse_problem(path, command: str):
    """Load ``path`` and build the typed problem for ``command``."""
    if command not in _PARSERS:
        raise ParseError("command", f"unknown command {command!r}")
    data = load_json(path)
    try:
        return _PARSERS[command](data)
    except InputError:
        raise
    except (PolynomialError, GameError, MrfError, GameInputError, AbsorbingGameError) as exc:
        raise InvariantViolation("<problem>", str(exc)) from exc
