import numpy as np
import pytest

from minmaxsdp.absorbing import (AbsorbingGameError, PolynomialAbsorbingGame, auxiliary_game,
                                 default_bracket, s_of_t, value_search)
from minmaxsdp.polycore import Polynomial, SemiAlgebraicSet

from oracles import discounted_fixed_point, grid_game_value

x, z = Polynomial.variables(2)
SYM = SemiAlgebraicSet.from_box([(-1, 1)])


def const(c):
    return Polynomial.constant(2, c)


def test_auxiliary_payoffs():
    lam = 0.4
    g, f = x * z, x - z
    A1 = PolynomialAbsorbingGame(SYM, SYM, g, f, const(1.0), lam)
    assert auxiliary_game(A1, 0.3).payoff.approx_equal(lam * (g - 0.3))
    A0 = PolynomialAbsorbingGame(SYM, SYM, g, f, const(0.0), lam)
    assert auxiliary_game(A0, 0.3).payoff.approx_equal((1 - lam) * f - 0.3)
    Ac = PolynomialAbsorbingGame(SYM, SYM, const(2.0), const(4.0), const(0.5), 0.5)
    assert auxiliary_game(Ac, 1.0).payoff.approx_equal(const(1.5 - 0.75))
    assert not auxiliary_game(Ac, 0.0).first_player_minimizes


def test_invalid_data():
    with pytest.raises(AbsorbingGameError):
        PolynomialAbsorbingGame(SYM, SYM, x, x, 0.5 + x, 0.5)
    with pytest.raises(AbsorbingGameError):
        PolynomialAbsorbingGame(SYM, SYM, x, x, const(0.5), 1.0)


def test_constant_s_of_t():
    A = PolynomialAbsorbingGame(SYM, SYM, const(2.0), const(4.0), const(0.5), 0.5)
    assert s_of_t(A, 2.0) == pytest.approx(0.0, abs=1e-7)
    assert s_of_t(A, 0.0) == pytest.approx(1.5, abs=1e-7)


def test_never_absorbing_root():
    A = PolynomialAbsorbingGame(SYM, SYM, x * z, const(0.0), const(1.0), 0.5)
    for t in (-0.5, 0.5):
        assert s_of_t(A, t) == pytest.approx(0.5 * (0.0 - t), abs=1e-6)


def test_s_at_zero_matches_grid():
    q = 0.5 * (1 + x * z)
    A = PolynomialAbsorbingGame(SYM, SYM, x * z, const(0.0), q, 0.5)
    # player 1 maximizes P; the grid oracle minimizes over rows, so negate
    oracle = -grid_game_value(-A.P, (-1, 1), (-1, 1))
    assert s_of_t(A, 0.0) == pytest.approx(oracle, abs=2e-3)


def test_search_never_absorbing():
    tr = value_search(PolynomialAbsorbingGame(SYM, SYM, x * z, const(0.0), const(1.0), 0.5))
    assert tr.converged and abs(tr.value) <= 1e-4 and tr.monotone()


def test_search_constant():
    A = PolynomialAbsorbingGame(SYM, SYM, const(2.0), const(4.0), const(0.5), 0.5)
    tr = value_search(A)
    assert tr.value == pytest.approx(2.0, abs=1e-6) and tr.monotone()
    assert tr.bisections <= 60


def test_search_against_fixed_point():
    gp = x * z + 0.3 * x - 0.2 * z * z
    fp = x - z + 0.5
    qp = 0.5 + 0.25 * x * z + 0.2 * z * z
    lam = 0.3
    A = PolynomialAbsorbingGame(SYM, SYM, gp, fp, qp, lam)
    tr = value_search(A)
    g = np.linspace(-1, 1, 201)
    P = np.array([[a, b] for a in g for b in g])
    G, F, Q = (p.evaluate_many(P).reshape(201, 201) for p in (gp, fp, qp))
    assert tr.value == pytest.approx(discounted_fixed_point(G, F, Q, lam), abs=5e-3)
    assert tr.monotone()
    assert tr.lipschitz(A.sampled_range(A.Q)[1])


def test_invalid_bracket_reports_values():
    A = PolynomialAbsorbingGame(SYM, SYM, const(2.0), const(4.0), const(0.5), 0.5)
    with pytest.raises(AbsorbingGameError, match="invalid bracket"):
        value_search(A, 3.0, 5.0)


def test_default_bracket():
    A = PolynomialAbsorbingGame(SYM, SYM, x * z, 2 * x, const(0.5), 0.5)
    lo, hi = default_bracket(A)
    assert lo == pytest.approx(-3.0, abs=1e-6) and hi == pytest.approx(3.0, abs=1e-6)


def test_certified_q_check():
    A = PolynomialAbsorbingGame(SYM, SYM, x, x, 0.5 + 0.4 * x * z, 0.5, certify_q=True)
    assert A.discount == 0.5
