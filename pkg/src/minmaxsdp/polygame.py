"""Zero-sum games with polynomial payoff on semi-algebraic strategy sets.

Player 1 picks a probability measure on K1 (variables x), player 2 one on K2
(variables z); the payoff is the integral of p(x, z). At order d two
semidefinite programs bracket the value: a primal one (moments of player 1
plus a sum-of-squares certificate over K2) giving an upper bound lambda_d, and
its mirror image giving a lower bound gamma_d. When the two agree and both
moment matrices are flat, atomic optimal strategies are extracted.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import sdpgate
from .atomreco import AtomicMeasure, search_extraction
from .momentkit import MomentVector, basis_matrices, basis_size, riesz_row
from .mrf import add_moment_constraints
from .polycore import Polynomial, SemiAlgebraicSet, monomials_upto


class GameInputError(ValueError):
    """Malformed polynomial game or order below the minimal one."""


def _prepare_set(K: SemiAlgebraicSet) -> SemiAlgebraicSet:
    """Add a ball constraint when a box is known but no constraint forces compactness."""
    if K.box is not None and K.ball_radius2 is None and not K.has_compact_constraint():
        return K.with_ball()
    return K


@dataclass(frozen=True)
class PolynomialGame:
    K1: SemiAlgebraicSet
    K2: SemiAlgebraicSet
    payoff: Polynomial                  # over (x, z), x first
    first_player_minimizes: bool = True

    def __post_init__(self):
        if self.payoff.nvars != self.K1.nvars + self.K2.nvars:
            raise GameInputError(
                f"payoff has {self.payoff.nvars} variables, expected {self.K1.nvars} + {self.K2.nvars}")
        for name, K in (("K1", self.K1), ("K2", self.K2)):
            K = _prepare_set(K)
            if not K.has_compact_constraint() and K.ball_radius2 is None:
                raise GameInputError(f"{name} needs a box or a constraint that makes it compact")
            object.__setattr__(self, name, K)

    @property
    def n1(self) -> int:
        return self.K1.nvars

    @property
    def n2(self) -> int:
        return self.K2.nvars

    @property
    def degree_x(self) -> int:
        return self.payoff.degree_in(range(self.n1))

    @property
    def degree_z(self) -> int:
        return self.payoff.degree_in(range(self.n1, self.n1 + self.n2))

    def value_at(self, x, z) -> float:
        return self.payoff.evaluate(np.concatenate([np.atleast_1d(x), np.atleast_1d(z)]))

    def expected(self, mu: AtomicMeasure, nu: AtomicMeasure) -> float:
        return float(sum(wa * wb * self.value_at(a, b)
                         for a, wa in zip(mu.atoms, mu.weights)
                         for b, wb in zip(nu.atoms, nu.weights)))


# ---------------------------------------------------------------------------
# coefficient splits


@dataclass(frozen=True)
class CoefficientSplit:
    n1: int
    n2: int
    z_side: dict    # z-exponent alpha -> p_alpha(x)
    x_side: dict    # x-exponent alpha -> phat_alpha(z)

    def reconstruct(self, side: str = "z") -> Polynomial:
        terms = {}
        if side == "z":
            for a, px in self.z_side.items():
                for b, c in px.items():
                    terms[tuple(b) + tuple(a)] = terms.get(tuple(b) + tuple(a), 0.0) + c
        else:
            for a, pz in self.x_side.items():
                for b, c in pz.items():
                    terms[tuple(a) + tuple(b)] = terms.get(tuple(a) + tuple(b), 0.0) + c
        return Polynomial(self.n1 + self.n2, terms)


def split_payoff(p: Polynomial, n1: int, n2: int) -> CoefficientSplit:
    """Group the terms of p(x, z) by their z-part and, separately, by their x-part."""
    if p.nvars != n1 + n2:
        raise GameInputError(f"payoff has {p.nvars} variables, expected {n1 + n2}")
    zs: dict = {}
    xs: dict = {}
    for m, c in p.items():
        mx, mz = tuple(m[:n1]), tuple(m[n1:])
        zs.setdefault(mz, {})[mx] = c
        xs.setdefault(mx, {})[mz] = c
    return CoefficientSplit(n1, n2,
                            {a: Polynomial(n1, t) for a, t in zs.items()},
                            {a: Polynomial(n2, t) for a, t in xs.items()})


def induced_polynomial(split: CoefficientSplit, y: MomentVector, side: str = "z") -> Polynomial:
    """p_y(z) = sum_alpha L_y(p_alpha) z^alpha (side "z", y over x) or its mirror (side "x")."""
    if side not in ("z", "x"):
        raise ValueError("side must be 'z' or 'x'")
    coeffs = split.z_side if side == "z" else split.x_side
    n_out = split.n2 if side == "z" else split.n1
    n_in = split.n1 if side == "z" else split.n2
    if y.nvars != n_in:
        raise GameInputError(f"moment vector has {y.nvars} variables, expected {n_in}")
    terms = {}
    idx = y.basis.index
    for a, q in coeffs.items():
        if q.degree > y.order:
            raise GameInputError(f"moments of order {y.order} cannot integrate degree {q.degree}")
        terms[a] = sum(c * y.values[idx[m]] for m, c in q.items())
    return Polynomial(n_out, terms)


# ---------------------------------------------------------------------------
# semidefinite programs


def _half(h: Polynomial) -> int:
    return math.ceil(h.degree / 2)


def minimal_order(G: PolynomialGame) -> int:
    """Smallest d for which every block of both programs is well formed."""
    ks = [_half(h) for h in G.K1.polys + G.K2.polys if not h.is_constant()]
    return max([math.ceil(G.degree_z / 2), math.ceil(G.degree_x / 2), 1] + ks)


def _build_side(Kmom: SemiAlgebraicSet, Ksos: SemiAlgebraicSet, coeffs: dict, d: int,
                sign: float, name: str) -> sdpgate.SdpProblem:
    """Moments on Kmom, certificate over Ksos.

    sign = +1: min t  s.t.  t - p_y = sum_k sigma_k h_k
    sign = -1: max t  s.t.  p_y - t = sum_k sigma_k h_k
    """
    n_m, n_s = Kmom.nvars, Ksos.nvars
    prob = sdpgate.SdpProblem(name)
    y = prob.add_variables("y", basis_size(n_m, 2 * d),
                           ["y" + "".join(map(str, m)) for m in monomials_upto(n_m, 2 * d)])
    t = prob.add_variables("t", 1, ["t"])
    add_moment_constraints(prob, y, n_m, d, Kmom.polys)
    prob.add_equality(y[:1], [1.0], 1.0)

    n_eq = basis_size(n_s, 2 * d)
    sos_monos = monomials_upto(n_s, 2 * d)
    pos = {m: k for k, m in enumerate(sos_monos)}
    C = sp.lil_matrix((n_eq, len(y)))
    for a, q in coeffs.items():
        if a not in pos:
            raise GameInputError(f"payoff degree exceeds the certificate degree at order {d}")
        try:
            C[pos[a], :] = riesz_row(q, 2 * d)
        except ValueError as exc:
            raise GameInputError(f"order {d} too small for the payoff: {exc}") from exc
    # y and t were declared first, so their columns lead the variable list
    base = sp.hstack([-sign * C.tocsr(), sp.csr_matrix(([sign], ([0], [0])), shape=(n_eq, 1))]).tocsr()
    total = sp.csr_matrix((base.data, base.indices, base.indptr), shape=(n_eq, len(y) + 1))
    certs = [Polynomial.constant(n_s, 1.0)] + [h for h in Ksos.polys if not h.is_constant()]
    for k, h in enumerate(certs):
        B = basis_matrices(h, d - _half(h))
        op = B.operator
        if op.shape[1] < n_eq:
            op = sp.hstack([op, sp.csc_matrix((op.shape[0], n_eq - op.shape[1]))]).tocsc()
        g = prob.add_gram(f"sigma{k}", B.size)
        total = sp.csr_matrix((total.data, total.indices, total.indptr), shape=(n_eq, prob.nvars))
        total = total - g.inner(op, prob.nvars)
    prob.add_equalities(total, np.zeros(n_eq))
    prob.set_objective(t, [1.0], sense="min" if sign > 0 else "max")
    return prob


def build_primal(G: PolynomialGame, d: int) -> sdpgate.SdpProblem:
    """Upper bound lambda_d: min over player-1 moments of a certified max over K2."""
    G = _min_orientation(G)
    _check_order(G, d)
    split = split_payoff(G.payoff, G.n1, G.n2)
    return _build_side(G.K1, G.K2, split.z_side, d, 1.0, f"game-primal-{d}")


def build_dual(G: PolynomialGame, d: int) -> sdpgate.SdpProblem:
    """Lower bound gamma_d: max over player-2 moments of a certified min over K1."""
    G = _min_orientation(G)
    _check_order(G, d)
    split = split_payoff(G.payoff, G.n1, G.n2)
    return _build_side(G.K2, G.K1, split.x_side, d, -1.0, f"game-dual-{d}")


def _trace_row(nvars: int, d: int) -> np.ndarray:
    """L_y(sum of squared basis monomials), i.e. the trace of M_d(y)."""
    sq = Polynomial(nvars, {tuple(2 * e for e in m): 1.0 for m in monomials_upto(nvars, d)})
    return riesz_row(sq, 2 * d)


def _low_rank_resolve(G: PolynomialGame, d: int, primal: bool, bound: float, band: float,
                      tol: float, max_iter: int):
    """Minimize trace M_d(y) over the band-optimal face of one program.

    Interior-point methods return points in the relative interior of the
    optimal face, whose rank is maximal. When that face also contains a
    flat point, trace minimization tends to find it.
    """
    P = build_primal(G, d) if primal else build_dual(G, d)
    t = P.groups["t"]
    if primal:
        P.add_nonneg("cap", t, [-1.0], bound + band)
    else:
        P.add_nonneg("cap", t, [1.0], -(bound - band))
    y = P.groups["y"]
    P.set_objective(y, _trace_row(G.n1 if primal else G.n2, d))
    rep = sdpgate.solve(P, tol, max_iter)
    return P, rep


def _check_order(G: PolynomialGame, d: int) -> None:
    d0 = minimal_order(G)
    if d < d0:
        raise GameInputError(f"order {d} is below the minimal order {d0}")


def _min_orientation(G: PolynomialGame) -> PolynomialGame:
    if G.first_player_minimizes:
        return G
    return PolynomialGame(G.K1, G.K2, -G.payoff, True)


# ---------------------------------------------------------------------------
# driver


@dataclass
class GameOrderResult:
    order: int
    upper: float                # lambda_d in the minimizing orientation
    lower: float                # gamma_d
    primal_status: str
    dual_status: str
    rank1: int | None
    rank2: int | None
    seconds: float
    accuracy: float
    moments1: MomentVector | None = field(default=None, repr=False)
    moments2: MomentVector | None = field(default=None, repr=False)


@dataclass
class GameSolveReport:
    orders: list
    value: float                # in the game's own orientation
    lower: float
    upper: float
    certified: bool
    status: str                 # certified | bracket | failed
    strategy1: AtomicMeasure | None
    strategy2: AtomicMeasure | None
    messages: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)


def _payoff_scale(p: Polynomial) -> float:
    m = p.max_abs_coef()
    return m if m > 0 else 1.0


def _atoms_in(K: SemiAlgebraicSet, tol: float = 1e-4):
    def ok(mu: AtomicMeasure) -> bool:
        return all(K.contains(a, tol) for a in mu.atoms)
    return ok


def solve_game(G: PolynomialGame, d_max: int | None = None, tol: float = 1e-8,
               rank_tol: float = 1e-6, d_start: int | None = None, seed: int = 0,
               concurrent: bool = False, accept_tol: float = 1e-6, max_iter: int = 100,
               samples: int = 10_000, low_rank: bool = True) -> GameSolveReport:
    """Solve both programs at increasing orders until a certificate or d_max."""
    Gm = _min_orientation(G)
    flip = -1.0 if not G.first_player_minimizes else 1.0
    scale = _payoff_scale(Gm.payoff)
    Gs = PolynomialGame(Gm.K1, Gm.K2, Gm.payoff * (1.0 / scale), True)
    split = split_payoff(Gm.payoff, Gm.n1, Gm.n2)
    d0 = minimal_order(Gs)
    d_lo = d0 if d_start is None else d_start
    if d_lo < d0:
        raise GameInputError(f"starting order {d_lo} is below the minimal order {d0}")
    d_max = d_lo + 3 if d_max is None else d_max
    if d_max < d_lo:
        raise GameInputError(f"maximal order {d_max} is below the minimal order {d_lo}")
    r1 = max([_half(g) for g in Gs.K1.polys if not g.is_constant()] + [1])
    r2 = max([_half(h) for h in Gs.K2.polys if not h.is_constant()] + [1])

    orders: list[GameOrderResult] = []
    messages: list[str] = []
    mu = nu = None
    certified = False
    for d in range(d_lo, d_max + 1):
        t0 = time.perf_counter()
        P, D = build_primal(Gs, d), build_dual(Gs, d)
        if concurrent:
            with ThreadPoolExecutor(max_workers=2) as ex:
                fp = ex.submit(sdpgate.solve, P, tol, max_iter)
                fd = ex.submit(sdpgate.solve, D, tol, max_iter)
                rp, rd = fp.result(), fd.result()
        else:
            rp, rd = sdpgate.solve(P, tol, max_iter), sdpgate.solve(D, tol, max_iter)
        up_ok, lo_ok = rp.usable(accept_tol), rd.usable(accept_tol)
        y1 = MomentVector(Gs.n1, 2 * d, rp.group(P, "y")) if up_ok else None
        y2 = MomentVector(Gs.n2, 2 * d, rd.group(D, "y")) if lo_ok else None
        res = GameOrderResult(d, rp.value * scale if up_ok else np.nan,
                              rd.value * scale if lo_ok else np.nan, rp.status, rd.status,
                              None, None, time.perf_counter() - t0,
                              max(rp.accuracy(), rd.accuracy()), y1, y2)
        orders.append(res)
        for side, rep, ok in (("primal", rp, up_ok), ("dual", rd, lo_ok)):
            if not ok:
                messages.append(f"order {d}: {side} solver status {rep.status} ({rep.message})")
            elif not rep.ok:
                messages.append(f"order {d}: {side} accepted inaccurate solution "
                                f"(accuracy {rep.accuracy():.1e})")
        if not (up_ok and lo_ok):
            continue
        band = max(1e-6, 10 * res.accuracy) * max(1.0, scale)
        if abs(res.upper - res.lower) > band:
            continue
        f1 = search_extraction(y1, d, r1, rank_tol, seed, accept=_atoms_in(Gs.K1))
        f2 = search_extraction(y2, d, r2, rank_tol, seed, accept=_atoms_in(Gs.K2))
        if low_rank and (f1.measure is None or f2.measure is None):
            bnd = max(1e-7, 10 * res.accuracy)
            for primal in (True, False):
                if (f1 if primal else f2).measure is not None:
                    continue
                bound = rp.value if primal else rd.value
                Pl, rl = _low_rank_resolve(Gs, d, primal, bound, bnd, tol, max_iter)
                if not rl.usable(accept_tol):
                    continue
                yl = MomentVector(Gs.n1 if primal else Gs.n2, 2 * d, rl.group(Pl, "y"))
                fl = search_extraction(yl, d, r1 if primal else r2, rank_tol, seed,
                                       accept=_atoms_in(Gs.K1 if primal else Gs.K2))
                if fl.measure is not None:
                    messages.append(f"order {d}: {'primal' if primal else 'dual'} flat point "
                                    f"found by trace minimization over the optimal face")
                    if primal:
                        f1, res.moments1 = fl, yl
                    else:
                        f2, res.moments2 = fl, yl
        res.rank1, res.rank2 = f1.rank, f2.rank
        if f1.measure is not None and f2.measure is not None:
            mu, nu = f1.measure, f2.measure
            certified = True
            break
        messages.append(f"order {d}: bounds agree but the rank test failed "
                        f"({(f1.errors or f2.errors)[0]})")

    good = [o for o in orders if np.isfinite(o.upper) and np.isfinite(o.lower)]
    if certified:
        lo_v, up_v = orders[-1].lower, orders[-1].upper
        status = "certified"
    elif good:
        lo_v, up_v = good[-1].lower, good[-1].upper
        status = "bracket"
    else:
        lo_v = up_v = np.nan
        status = "failed"
    value = 0.5 * (lo_v + up_v)
    checks = _checks(Gm, split, orders, samples, seed, mu, nu, value)
    if flip < 0:
        lo_v, up_v, value = -up_v, -lo_v, -value
    return GameSolveReport(orders, value, lo_v, up_v, certified, status, mu, nu, messages, checks)


def _checks(G: PolynomialGame, split: CoefficientSplit, orders, samples: int, seed: int,
            mu, nu, value) -> dict:
    """Sample-based soundness of every order and best-response gaps of the strategies.

    All quantities are in the minimizing orientation.
    """
    out = {"upper_sound": True, "lower_sound": True, "orders": []}
    Z = _sample(G.K2, samples, seed)
    X = _sample(G.K1, samples, seed + 1)
    for o in orders:
        row = {"order": o.order}
        if o.moments1 is not None and Z is not None:
            py = induced_polynomial(split, o.moments1, "z")
            row["sample_max"] = float(py.evaluate_many(Z).max())
            row["upper_ok"] = bool(o.upper >= row["sample_max"] - 1e-6)
            out["upper_sound"] &= row["upper_ok"]
        if o.moments2 is not None and X is not None:
            px = induced_polynomial(split, o.moments2, "x")
            row["sample_min"] = float(px.evaluate_many(X).min())
            row["lower_ok"] = bool(o.lower <= row["sample_min"] + 1e-6)
            out["lower_sound"] &= row["lower_ok"]
        out["orders"].append(row)
    if mu is not None and nu is not None and X is not None and Z is not None:
        vs_z = [sum(w * G.payoff.evaluate(np.concatenate([a, z])) for a, w in zip(mu.atoms, mu.weights))
                for z in Z[: min(len(Z), 2000)]]
        vs_x = [sum(w * G.payoff.evaluate(np.concatenate([x, b])) for b, w in zip(nu.atoms, nu.weights))
                for x in X[: min(len(X), 2000)]]
        out["best_response_upper"] = float(max(vs_z))
        out["best_response_lower"] = float(min(vs_x))
        out["strategies_ok"] = bool(max(vs_z) <= value + 1e-4 and min(vs_x) >= value - 1e-4)
    return out


def _sample(K: SemiAlgebraicSet, count: int, seed: int):
    if K.box is None:
        return None
    pts = K.sample(count, seed)
    return pts if len(pts) else None
