"""Discounted absorbing games with polynomial data on semi-algebraic sets.

At every stage player 1 (maximizer, x in K1) and player 2 (minimizer, z in
K2) play; the game continues with probability q(x, z) and otherwise is
absorbed. The discounted value v is the unique root of the strictly
decreasing function

    s(t) = max_mu min_nu  integral of (P - t Q) d(mu x nu),

with P = lam*g*q + (1 - lam)*f*(1 - q) and Q = lam*q + 1 - q. Each s(t) is the
value of a polynomial zero-sum game, and v is located by bisection.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .mrf import polynomial_lower_bound
from .polycore import Polynomial, SemiAlgebraicSet
from .polygame import GameSolveReport, PolynomialGame, minimal_order, solve_game


class AbsorbingGameError(ValueError):
    """Invalid absorbing game data or an invalid search bracket."""


def product_set(K1: SemiAlgebraicSet, K2: SemiAlgebraicSet) -> SemiAlgebraicSet:
    n1, n2 = K1.nvars, K2.nvars
    cons = [g.embed(n1 + n2, list(range(n1))) for g in K1.polys]
    cons += [h.embed(n1 + n2, list(range(n1, n1 + n2))) for h in K2.polys]
    box = None
    if K1.box is not None and K2.box is not None:
        box = tuple(K1.box) + tuple(K2.box)
    return SemiAlgebraicSet(n1 + n2, tuple(cons), box)


@dataclass(frozen=True)
class PolynomialAbsorbingGame:
    K1: SemiAlgebraicSet
    K2: SemiAlgebraicSet
    g: Polynomial          # stage payoff while the game continues
    f: Polynomial          # absorbing payoff
    q: Polynomial          # continuation probability, within [0, 1]
    discount: float        # lambda in (0, 1)
    certify_q: bool = False
    samples: int = 4096

    def __post_init__(self):
        n = self.K1.nvars + self.K2.nvars
        for name in ("g", "f", "q"):
            if getattr(self, name).nvars != n:
                raise AbsorbingGameError(f"{name} must have {n} variables")
        if not 0.0 < self.discount < 1.0:
            raise AbsorbingGameError(f"discount {self.discount} is not in (0, 1)")
        self._check_q()

    def _check_q(self) -> None:
        K = self.product
        if K.box is not None:
            pts = K.sample(self.samples, seed=0)
            if len(pts):
                vals = self.q.evaluate_many(pts)
                lo, hi = float(vals.min()), float(vals.max())
                if lo < -1e-6 or hi > 1 + 1e-6:
                    raise AbsorbingGameError(
                        f"q leaves [0, 1] on sampled points (range [{lo:.6g}, {hi:.6g}])")
        if self.certify_q:
            if polynomial_lower_bound(self.q, K) < -1e-6:
                raise AbsorbingGameError("could not certify q >= 0")
            if polynomial_lower_bound(1.0 - self.q, K) < -1e-6:
                raise AbsorbingGameError("could not certify q <= 1")

    @property
    def product(self) -> SemiAlgebraicSet:
        return product_set(self.K1, self.K2)

    @property
    def P(self) -> Polynomial:
        lam = self.discount
        return lam * (self.g * self.q) + (1.0 - lam) * (self.f * (1.0 - self.q))

    @property
    def Q(self) -> Polynomial:
        lam = self.discount
        return lam * self.q + (1.0 - self.q)

    def sampled_range(self, poly: Polynomial) -> tuple[float, float]:
        K = self.product
        if K.box is None:
            raise AbsorbingGameError("sampling needs boxes on both strategy sets")
        vals = poly.evaluate_many(K.sample(self.samples, seed=0))
        return float(vals.min()), float(vals.max())


def auxiliary_game(A: PolynomialAbsorbingGame, t: float) -> PolynomialGame:
    """Zero-sum game with payoff P - t Q; player 1 maximizes."""
    return PolynomialGame(A.K1, A.K2, A.P - float(t) * A.Q, first_player_minimizes=False)


def s_of_t(A: PolynomialAbsorbingGame, t: float, **opts) -> float:
    return _evaluate(A, t, opts)[0]


def _evaluate(A: PolynomialAbsorbingGame, t: float, opts: dict):
    rep = solve_game(auxiliary_game(A, t), **opts)
    if rep.status == "failed":
        raise AbsorbingGameError(f"auxiliary game at t={t:.6g} could not be solved: {rep.messages}")
    return rep.value, rep


@dataclass
class ValueSearchTrace:
    evaluations: list                   # (t, s(t)) in evaluation order
    bracket: tuple
    value: float
    reports: list = field(repr=False, default_factory=list)
    order: int | None = None
    converged: bool = False
    bisections: int = 0

    def monotone(self, tol: float = 1e-8) -> bool:
        pts = sorted(self.evaluations)
        return all(s1 >= s2 - 2 * tol for (_, s1), (_, s2) in zip(pts, pts[1:]))

    def lipschitz(self, max_q: float, slack: float = 1e-6) -> bool:
        """|s(t) - s(t')| <= |t - t'| max Q on every recorded pair."""
        pts = sorted(self.evaluations)
        return all(abs(s1 - s2) <= abs(t2 - t1) * max_q * (1 + 1e-3) + slack
                   for i, (t1, s1) in enumerate(pts) for t2, s2 in pts[i + 1:])


def default_bracket(A: PolynomialAbsorbingGame) -> tuple[float, float]:
    lo_g, hi_g = A.sampled_range(A.g)
    lo_f, hi_f = A.sampled_range(A.f)
    return min(lo_g, lo_f) - 1.0, max(hi_g, hi_f) + 1.0


def value_search(A: PolynomialAbsorbingGame, t_lo: float | None = None, t_hi: float | None = None,
                 s_tol: float = 1e-5, max_bisect: int = 60, d_max: int | None = None,
                 tol: float = 1e-8, rank_tol: float = 1e-6, seed: int = 0,
                 concurrent: bool = False) -> ValueSearchTrace:
    """Bisection on t for the root of s; each s(t) is a polynomial game value."""
    if t_lo is None or t_hi is None:
        lo_d, hi_d = default_bracket(A)
        t_lo = lo_d if t_lo is None else t_lo
        t_hi = hi_d if t_hi is None else t_hi
    if not t_lo < t_hi:
        raise AbsorbingGameError(f"empty bracket [{t_lo}, {t_hi}]")
    d0 = minimal_order(auxiliary_game(A, t_lo))
    opts = dict(d_max=d0 + 3 if d_max is None else d_max, tol=tol, rank_tol=rank_tol, seed=seed,
                samples=2000)
    if concurrent:
        with ThreadPoolExecutor(max_workers=2) as ex:
            f_lo = ex.submit(_evaluate, A, t_lo, opts)
            f_hi = ex.submit(_evaluate, A, t_hi, opts)
            (s_lo, r_lo), (s_hi, r_hi) = f_lo.result(), f_hi.result()
    else:
        s_lo, r_lo = _evaluate(A, t_lo, opts)
        s_hi, r_hi = _evaluate(A, t_hi, opts)
    if not (s_lo >= 0.0 >= s_hi):
        raise AbsorbingGameError(
            f"invalid bracket: s({t_lo:.6g}) = {s_lo:.6g}, s({t_hi:.6g}) = {s_hi:.6g}")
    evals = [(t_lo, s_lo), (t_hi, s_hi)]
    reports = [r_lo, r_hi]
    # later evaluations start at the order that certified the first ones
    d_used = max(_certified_order(r_lo, d0), _certified_order(r_hi, d0))
    opts["d_start"] = d_used
    opts["d_max"] = max(opts["d_max"], d_used)

    lo, hi = t_lo, t_hi
    value, converged, steps = None, False, 0
    for t, s in evals:
        if abs(s) <= s_tol:
            value, converged = t, True
    while value is None and steps < max_bisect and hi - lo > 1e-8:
        mid = 0.5 * (lo + hi)
        s_mid, rep = _evaluate(A, mid, opts)
        steps += 1
        evals.append((mid, s_mid))
        reports.append(rep)
        if abs(s_mid) <= s_tol:
            value, converged = mid, True
            break
        if s_mid > 0:
            lo = mid
        else:
            hi = mid
    if value is None:
        value = 0.5 * (lo + hi)
        converged = hi - lo <= 1e-8
    return ValueSearchTrace(evals, (lo, hi), value, reports, d_used, converged, steps)


def _certified_order(rep: GameSolveReport, default: int) -> int:
    if rep.certified and rep.orders:
        return rep.orders[-1].order
    return default
