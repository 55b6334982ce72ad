import numpy as np
import pytest

from minmaxsdp.finite_games import FiniteGame, nash_mrf, normalized_game
from minmaxsdp.mrf import (MrfError, MrfProblem, build_relaxation, compute_bounds, lift,
                           solve_hierarchy)
from minmaxsdp.polycore import Polynomial, RationalFunction, SemiAlgebraicSet, set_contains
from minmaxsdp.sdpgate import detect_linear

x = Polynomial.variable(1, 0)
ONE = Polynomial.constant(1, 1.0)
UNIT = SemiAlgebraicSet(1, (x, 1 - x), box=[(0, 1)])


def rf(p, q=None):
    return RationalFunction(p, ONE if q is None else q)


def crossing_problem():
    return MrfProblem(UNIT, rf(Polynomial.zero(1)), (rf(x), rf(1 - x)))


def test_bounds_identity_branch():
    prob = MrfProblem(UNIT, rf(Polynomial.zero(1)), (rf(x),))
    assert compute_bounds(prob) == pytest.approx((1.0, 0.0))


def test_bounds_constant_branch():
    prob = MrfProblem(UNIT, rf(Polynomial.zero(1)), (rf(Polynomial.constant(1, -3.0)),))
    assert compute_bounds(prob) == pytest.approx((3.0, -3.0))


def test_bounds_rational_branch():
    prob = MrfProblem(UNIT, rf(Polynomial.zero(1)), (rf(x * x, 1 + x),))
    # max|p| = 1, min q = 1, min p = 0, max q = 2 (1-D scan)
    grid = np.linspace(0, 1, 10_001)
    M1 = np.abs(grid ** 2).max() / (1 + grid).min()
    M2 = (grid ** 2).min() / (1 + grid).max()
    assert compute_bounds(prob) == pytest.approx((M1, M2))


def test_bounds_user_and_errors():
    prob = crossing_problem()
    assert compute_bounds(prob, (2.0, -1.0)) == (2.0, -1.0)
    with pytest.raises(MrfError):
        compute_bounds(prob, (0.0, 1.0))
    with pytest.raises(MrfError):
        compute_bounds(MrfProblem(SemiAlgebraicSet(1, (x, 1 - x)), rf(Polynomial.zero(1)), (rf(x),)))


def test_lift_crossing():
    L = lift(crossing_problem(), (1.0, 0.0))
    assert L.has_z and L.nvars == 2
    # K constraints, two branch constraints and the bound constraint(s)
    assert len(L.constraints) >= 5
    for u in np.linspace(-1, 1, 5):
        for xv in np.linspace(0, 1, 5):
            z = L.z_value(u)
            inside = all(g.evaluate([xv, u]) >= -1e-12 for g in L.constraints)
            assert inside == (z >= max(xv, 1 - xv) - 1e-12)


def test_lift_without_branches():
    prob = MrfProblem(UNIT, rf(x, 1 + x))
    L = lift(prob)
    assert not L.has_z and L.nvars == 1
    assert L.objective == x and L.normalization == 1 + x


def test_example1_lift_shape():
    G = FiniteGame((2, 2), [np.array([[0.05, 0], [0, 0.82]]), np.array([[0.56, 0], [0, 0.76]])])
    prob = nash_mrf(G)
    assert len(prob.branches) == 4 and prob.nvars == 4
    L = lift(prob, compute_bounds(prob))
    assert L.nvars == prob.nvars + 1


def test_relaxation_crossing_order_one():
    rel = build_relaxation(lift(crossing_problem(), (1.0, 0.0), affine_bounds=False), 1)
    assert max(p.size for p in rel.sdp.pencils) == 3


def test_relaxation_order_too_small():
    L = lift(MrfProblem(UNIT, rf(x * x * x)))
    with pytest.raises(MrfError):
        build_relaxation(L, L.r0 - 1)


def test_zero_sum_relaxation_is_linear():
    from minmaxsdp.finite_games import minmax_mrf
    G = FiniteGame((3, 2), [np.arange(6.0).reshape(3, 2), -np.arange(6.0).reshape(3, 2)])
    prob = minmax_mrf(G, 0)
    assert detect_linear(build_relaxation(lift(prob, compute_bounds(prob)), 1).sdp)


def test_solve_crossing():
    rep = solve_hierarchy(crossing_problem())
    assert rep.certified and rep.value == pytest.approx(0.5, abs=1e-6)
    assert rep.minimizers.atoms[:, 0] == pytest.approx([0.5], abs=1e-5)


def test_solve_rational_crossing():
    prob = MrfProblem(UNIT, rf(Polynomial.zero(1)), (rf(x, x + 1), rf(1 - x, 2 - x)))
    grid = np.linspace(0, 1, 100_001)
    oracle = np.maximum(grid / (grid + 1), (1 - grid) / (2 - grid)).min()
    rep = solve_hierarchy(prob)
    assert rep.value == pytest.approx(1 / 3, abs=1e-6) and oracle == pytest.approx(1 / 3, abs=1e-8)
    assert rep.minimizers.atoms[0, 0] == pytest.approx(0.5, abs=1e-4)


def test_single_rational_matches_grid():
    f0 = rf(x * x - x + 0.3, 1 + x * x)
    K = SemiAlgebraicSet(1, (1 - x * x,), box=[(-1, 1)])
    rep = solve_hierarchy(MrfProblem(K, f0))
    grid = np.linspace(-1, 1, 200_001)
    assert rep.value == pytest.approx(f0.evaluate_many(grid[:, None]).min(), abs=1e-4)


def _two_variable_instances():
    a, b = Polynomial.variables(2)
    one = Polynomial.constant(2, 1.0)
    box = SemiAlgebraicSet(2, (1 - a * a, 1 - b * b), box=[(-1, 1), (-1, 1)])
    disk = SemiAlgebraicSet(2, (1 - a * a - b * b,), box=[(-1, 1), (-1, 1)])
    return [
        MrfProblem(box, RationalFunction(a * b, one),
                   (RationalFunction(a - b, one), RationalFunction(b * b - a, one))),
        MrfProblem(disk, RationalFunction(0.2 * a, one),
                   (RationalFunction(a * a + b, 1 + 0.5 * a * a), RationalFunction(-b, one))),
    ]


def _grid_min(prob, n=401):
    g = np.linspace(-1, 1, n)
    X = np.array([[u, v] for u in g for v in g])
    X = X[[set_contains(prob.K, p) for p in X]]
    return prob.objective_many(X).min()


@pytest.mark.parametrize("k", [0, 1])
def test_monotone_and_lower_bound(k):
    prob = _two_variable_instances()[k]
    rep = solve_hierarchy(prob, early_stop=False)
    vals = [o.value for o in rep.orders if o.moments is not None]
    assert all(b >= a - 2e-8 for a, b in zip(vals, vals[1:]))
    rho = _grid_min(prob)
    assert all(v <= rho + 1e-6 for v in vals)
    if rep.minimizers is not None:
        for a in rep.minimizers.atoms:
            assert set_contains(prob.K, a, 1e-5)
            assert prob.objective(a) <= rep.value + 1e-5


def test_perturbation_keeps_value_close():
    rep = solve_hierarchy(crossing_problem(), perturb=1e-4, seed=3)
    assert rep.value == pytest.approx(0.5, abs=1e-3)


def test_rmax_below_r0():
    with pytest.raises(MrfError):
        solve_hierarchy(MrfProblem(UNIT, rf(x ** 4)), r_max=1)


def test_nash_value_zero_example1():
    G = FiniteGame((2, 2), [np.array([[0.05, 0], [0, 0.82]]), np.array([[0.56, 0], [0, 0.76]])])
    Gn, _ = normalized_game(G)
    rep = solve_hierarchy(nash_mrf(Gn), r_max=3, check_denominators=False)
    assert abs(rep.value) <= 1e-5
