"""Finite games as MRF problems.

Mixed strategies of all players are concatenated into one variable vector;
player j owns the block ``offsets[j]:offsets[j+1]``. Payoffs enter through
their multilinear extensions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .atomreco import AtomicMeasure
from .mrf import HierarchyReport, MrfProblem, solve_hierarchy
from .polycore import Polynomial, RationalFunction, SemiAlgebraicSet


class GameError(ValueError):
    """Inconsistent game data."""


@dataclass(frozen=True)
class FiniteGame:
    actions: tuple
    payoffs: tuple      # one ndarray of shape ``actions`` per player

    def __post_init__(self):
        acts = tuple(int(a) for a in self.actions)
        if not acts or any(a < 1 for a in acts):
            raise GameError("every player needs at least one action")
        pays = tuple(np.asarray(g, dtype=float).reshape(acts) for g in self.payoffs)
        if len(pays) != len(acts):
            raise GameError(f"{len(acts)} players but {len(pays)} payoff tensors")
        object.__setattr__(self, "actions", acts)
        object.__setattr__(self, "payoffs", pays)

    @property
    def players(self) -> int:
        return len(self.actions)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.actions)])

    @property
    def nvars(self) -> int:
        return int(sum(self.actions))

    def split(self, x) -> list[np.ndarray]:
        x = np.asarray(x, dtype=float)
        o = self.offsets
        return [x[o[j]:o[j + 1]] for j in range(self.players)]


@dataclass(frozen=True)
class LoomisGame:
    game: FiniteGame        # numerators g^i
    denominators: tuple     # f^i, entrywise positive

    def __post_init__(self):
        dens = tuple(np.asarray(f, dtype=float).reshape(self.game.actions) for f in self.denominators)
        if len(dens) != self.game.players:
            raise GameError("one denominator tensor per player is required")
        for i, f in enumerate(dens):
            if np.any(f <= 0):
                bad = np.unravel_index(int(np.argmin(f)), f.shape)
                raise GameError(f"denominator of player {i} is not positive at profile {list(bad)}")
        object.__setattr__(self, "denominators", dens)


@dataclass(frozen=True)
class FiniteAbsorbingGame:
    game: FiniteGame            # stage payoffs g^i
    absorbing_payoffs: tuple    # f^i
    continuation: np.ndarray    # q(s): probability of not absorbing
    discount: float             # lambda

    def __post_init__(self):
        f = tuple(np.asarray(t, dtype=float).reshape(self.game.actions) for t in self.absorbing_payoffs)
        q = np.asarray(self.continuation, dtype=float).reshape(self.game.actions)
        if len(f) != self.game.players:
            raise GameError("one absorbing payoff tensor per player is required")
        if np.any(q < 0) or np.any(q > 1):
            raise GameError("continuation probabilities must lie in [0, 1]")
        if not 0 < self.discount < 1:
            raise GameError("discount factor must lie in (0, 1)")
        object.__setattr__(self, "absorbing_payoffs", f)
        object.__setattr__(self, "continuation", q)


# ---------------------------------------------------------------------------
# evaluation


def validate_profile(G: FiniteGame, prof, tol: float = 1e-9) -> list[np.ndarray]:
    prof = [np.asarray(p, dtype=float).reshape(-1) for p in prof]
    if len(prof) != G.players:
        raise GameError(f"profile has {len(prof)} strategies, game has {G.players} players")
    for j, (p, a) in enumerate(zip(prof, G.actions)):
        if p.shape[0] != a:
            raise GameError(f"strategy of player {j} has {p.shape[0]} entries, expected {a}")
        if np.any(p < -tol) or abs(p.sum() - 1) > tol:
            raise GameError(f"strategy of player {j} is not a probability vector: {p.tolist()}")
    return prof


def _contract(T: np.ndarray, prof, skip=None) -> np.ndarray:
    out = T
    for j in reversed(range(len(prof))):
        if j == skip:
            continue
        out = np.tensordot(out, prof[j], axes=([j], [0]))
    return out


def tensor_eval(T: np.ndarray, prof) -> float:
    return float(_contract(T, prof))


def multilinear_eval(G: FiniteGame, i: int, prof) -> float:
    prof = validate_profile(G, prof, tol=1e-6)
    return tensor_eval(G.payoffs[i], prof)


def deviation_payoffs(T: np.ndarray, prof, i: int) -> np.ndarray:
    """Payoff of every pure action of player i against the others' mixed play."""
    return np.asarray(_contract(T, prof, skip=i)).reshape(-1)


def best_response_residual(G: FiniteGame, prof) -> float:
    """max_i max_s g^i(s, p^-i) - g^i(p); zero exactly at Nash equilibria."""
    prof = [np.asarray(p, dtype=float) for p in prof]
    return max(float(deviation_payoffs(T, prof, i).max() - tensor_eval(T, prof))
               for i, T in enumerate(G.payoffs))


def loomis_residual(L: LoomisGame, prof) -> float:
    prof = [np.asarray(p, dtype=float) for p in prof]
    worst = -np.inf
    for i, (g, f) in enumerate(zip(L.game.payoffs, L.denominators)):
        dev = deviation_payoffs(g, prof, i) / deviation_payoffs(f, prof, i)
        worst = max(worst, float(dev.max() - tensor_eval(g, prof) / tensor_eval(f, prof)))
    return worst


# ---------------------------------------------------------------------------
# polynomial forms


def simplex_product(G: FiniteGame, players=None) -> SemiAlgebraicSet:
    """Product of the simplices of ``players`` (default: all), as inequalities."""
    players = list(range(G.players)) if players is None else list(players)
    n = sum(G.actions[j] for j in players)
    xs = Polynomial.variables(n)
    cons = []
    k = 0
    for j in players:
        blk = xs[k:k + G.actions[j]]
        cons += blk
        tot = sum(blk[1:], blk[0])
        cons += [tot - 1.0, 1.0 - tot]
        k += G.actions[j]
    return SemiAlgebraicSet(n, tuple(cons), box=tuple((0.0, 1.0) for _ in range(n)))


def multilinear_polynomial(T: np.ndarray, actions, players, nvars: int, fixed=None) -> Polynomial:
    """Multilinear extension of T in the probability variables of ``players``.

    ``players`` lists the players whose strategies are variables, laid out
    consecutively from variable 0. ``fixed`` maps a player to a pure action
    used instead of its mixed strategy. A constant tensor gives the constant
    polynomial, which coincides with the extension on the product of simplices.
    """
    fixed = fixed or {}
    T = np.asarray(T, dtype=float)
    if np.ptp(T) == 0 and not fixed:
        return Polynomial.constant(nvars, float(T.flat[0]))
    offs = {}
    k = 0
    for j in players:
        offs[j] = k
        k += actions[j]
    terms = {}
    for s in itertools.product(*[range(a) for a in actions]):
        if any(s[j] != a for j, a in fixed.items()):
            continue
        c = T[s]
        if c == 0:
            continue
        e = [0] * nvars
        for j in players:
            if j in fixed:
                continue
            e[offs[j] + s[j]] += 1
        key = tuple(e)
        terms[key] = terms.get(key, 0.0) + c
    return Polynomial(nvars, terms)


def nash_mrf(G: FiniteGame) -> MrfProblem:
    """min over profiles of max_{i,s} g^i(s, p^-i) - g^i(p); optimum 0 at equilibria."""
    n = G.nvars
    everyone = list(range(G.players))
    branches = []
    for i, T in enumerate(G.payoffs):
        full = multilinear_polynomial(T, G.actions, everyone, n)
        for a in range(G.actions[i]):
            dev = multilinear_polynomial(T, G.actions, everyone, n, fixed={i: a})
            if np.ptp(T) == 0:
                dev = full
            branches.append(RationalFunction.polynomial(dev - full))
    zero = RationalFunction.polynomial(Polynomial.zero(n))
    return MrfProblem(simplex_product(G), zero, branches)


def minmax_mrf(G: FiniteGame, i: int) -> MrfProblem:
    """min over the others' profiles of max_s g^i(s, p^-i)."""
    if G.players < 2:
        raise GameError("the min-max payoff needs at least two players")
    if not 0 <= i < G.players:
        raise GameError(f"player index {i} out of range")
    others = [j for j in range(G.players) if j != i]
    n = sum(G.actions[j] for j in others)
    T = G.payoffs[i]
    branches = []
    for a in range(G.actions[i]):
        sl = np.take(T, a, axis=i)
        sub_actions = [G.actions[j] for j in others]
        branches.append(RationalFunction.polynomial(
            multilinear_polynomial(sl, sub_actions, list(range(len(others))), n)))
    zero = RationalFunction.polynomial(Polynomial.zero(n))
    return MrfProblem(simplex_product(G, others), zero, branches)


def loomis_mrf(L: LoomisGame) -> MrfProblem:
    """Branches h^i(s, p^-i) - h^i(p) with h = g/f over the common denominator."""
    G = L.game
    n = G.nvars
    everyone = list(range(G.players))
    branches = []
    for i, (g, f) in enumerate(zip(G.payoffs, L.denominators)):
        gp = multilinear_polynomial(g, G.actions, everyone, n)
        fp = multilinear_polynomial(f, G.actions, everyone, n)
        for a in range(G.actions[i]):
            gs = gp if np.ptp(g) == 0 else multilinear_polynomial(g, G.actions, everyone, n, {i: a})
            fs = fp if np.ptp(f) == 0 else multilinear_polynomial(f, G.actions, everyone, n, {i: a})
            branches.append(RationalFunction(gs * fp - gp * fs, fs * fp))
    zero = RationalFunction.polynomial(Polynomial.zero(n))
    return MrfProblem(simplex_product(G), zero, branches)


def absorbing_to_loomis(A: FiniteAbsorbingGame) -> LoomisGame:
    """Stationary equilibria of the absorbing game are Loomis equilibria of
    (lambda g q + (1 - lambda) f (1 - q)) / (lambda q + 1 - q)."""
    lam, q = A.discount, A.continuation
    nums = [lam * g * q + (1 - lam) * f * (1 - q) for g, f in zip(A.game.payoffs, A.absorbing_payoffs)]
    den = lam * q + (1 - q)
    return LoomisGame(FiniteGame(A.game.actions, nums), tuple(den for _ in nums))


# ---------------------------------------------------------------------------
# normalization and solving


def _nash_normalization(G: FiniteGame):
    shifts = [0.5 * (T.max() + T.min()) for T in G.payoffs]
    scale = max(0.5 * np.ptp(T) for T in G.payoffs)
    scale = scale if scale > 0 else 1.0
    return shifts, scale


def normalized_game(G: FiniteGame):
    """Payoffs shifted per player and divided by one common scale into [-1, 1]."""
    shifts, scale = _nash_normalization(G)
    return FiniteGame(G.actions, [(T - c) / scale for T, c in zip(G.payoffs, shifts)]), scale


def normalized_loomis(L: LoomisGame):
    """(g - c f)/s over f/F: ratios move by a per-player shift and one common scale F/s."""
    G = L.game
    shifts = [0.5 * ((g / f).max() + (g / f).min()) for g, f in zip(G.payoffs, L.denominators)]
    nums = [g - c * f for g, f, c in zip(G.payoffs, L.denominators, shifts)]
    s = max(np.abs(t).max() for t in nums)
    s = s if s > 0 else 1.0
    F = max(f.max() for f in L.denominators)
    out = LoomisGame(FiniteGame(G.actions, [t / s for t in nums]), tuple(f / F for f in L.denominators))
    return out, s / F


@dataclass
class GameReport:
    value: float
    status: str
    profiles: list = field(default_factory=list)     # list of lists of strategies
    residuals: list = field(default_factory=list)    # best-response residual per profile
    hierarchy: HierarchyReport | None = None
    scale: float = 1.0
    first_moment_profile: list | None = None


def _profiles_from(mu: AtomicMeasure | None, G: FiniteGame, players=None):
    if mu is None:
        return []
    out = []
    for atom in mu.atoms:
        parts = G.split(atom) if players is None else _split_players(G, atom, players)
        out.append([np.clip(p, 0.0, None) / max(np.clip(p, 0.0, None).sum(), 1e-300) for p in parts])
    return out


def _split_players(G, x, players):
    out, k = [], 0
    for j in players:
        out.append(np.asarray(x[k:k + G.actions[j]]))
        k += G.actions[j]
    return out


def solve_nash(G: FiniteGame, normalize: bool = True, **opts) -> GameReport:
    Gn, scale = normalized_game(G) if normalize else (G, 1.0)
    rep = solve_hierarchy(nash_mrf(Gn), check_denominators=False, stop_value=0.0, **opts)
    profiles = _profiles_from(rep.minimizers, G)
    fm = G.split(rep.first_moment_point) if rep.first_moment_point is not None else None
    return GameReport(rep.value * scale, rep.status, profiles,
                      [best_response_residual(G, p) for p in profiles], rep, scale, fm)


def solve_minmax(G: FiniteGame, i: int, normalize: bool = True, **opts) -> GameReport:
    if normalize:
        T = G.payoffs[i]
        c, s = 0.5 * (T.max() + T.min()), 0.5 * np.ptp(T) or 1.0
        pays = list(G.payoffs)
        pays[i] = (T - c) / s
        Gw = FiniteGame(G.actions, pays)
    else:
        c, s, Gw = 0.0, 1.0, G
    rep = solve_hierarchy(minmax_mrf(Gw, i), check_denominators=False, **opts)
    others = [j for j in range(G.players) if j != i]
    profiles = _profiles_from(rep.minimizers, G, others)
    return GameReport(rep.value * s + c, rep.status, profiles, [], rep, s)


def solve_loomis(L: LoomisGame, normalize: bool = True, **opts) -> GameReport:
    Ln, scale = normalized_loomis(L) if normalize else (L, 1.0)
    # f > 0 entrywise makes every multilinear denominator positive on the simplices
    rep = solve_hierarchy(loomis_mrf(Ln), check_denominators=False, stop_value=0.0, **opts)
    profiles = _profiles_from(rep.minimizers, L.game)
    fm = L.game.split(rep.first_moment_point) if rep.first_moment_point is not None else None
    return GameReport(rep.value * scale, rep.status, profiles,
                      [loomis_residual(L, p) for p in profiles], rep, scale, fm)


def solve_absorbing_finite(A: FiniteAbsorbingGame, **opts) -> GameReport:
    return solve_loomis(absorbing_to_loomis(A), **opts)


def matrix_game_value(M: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and optimal row strategy of the zero-sum game where the row player
    maximizes x^T M y, by linear programming."""
    from scipy.optimize import linprog

    M = np.asarray(M, dtype=float)
    m, k = M.shape
    # max v s.t. M^T x >= v, sum x = 1, x >= 0
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-M.T, np.ones((k, 1))])
    A_eq = np.zeros((1, m + 1))
    A_eq[0, :m] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(k), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * m + [(None, None)], method="highs")
    if res.status != 0:
        raise GameError(f"matrix game LP failed: {res.message}")
    return float(res.x[-1]), res.x[:m]
