import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from minmaxsdp.momentkit import (MomentError, MomentVector, MonomialBasis, basis_matrices,
                                 basis_size, localizing_matrix, moment_matrix, riesz)
from minmaxsdp.polycore import Polynomial

from conftest import poly


def dirac(point, order):
    return MomentVector.from_atoms([np.atleast_1d(point)], [1.0], order)


def test_basis_order_and_size():
    B = MonomialBasis(2, 2)
    assert len(B) == basis_size(2, 2) == 6
    assert B.monomials[0] == (0, 0)
    assert [sum(m) for m in B.monomials] == sorted(sum(m) for m in B.monomials)


def test_riesz_examples():
    x = Polynomial.variable(1, 0)
    y = MomentVector(1, 2, [1.0, 0.5, 0.3])
    assert riesz(y, Polynomial.constant(1, 1.0)) == 1.0
    assert riesz(dirac(3.0, 2), x * x) == pytest.approx(9.0)
    assert riesz(y, 2 * x + 3) == pytest.approx(4.0)


def test_riesz_degree_overflow():
    x = Polynomial.variable(1, 0)
    with pytest.raises(MomentError):
        riesz(MomentVector(1, 2, [1, 0, 0]), x ** 3)


def test_moment_matrix_dirac():
    M = moment_matrix(MomentVector(1, 2, [1.0, 2.0, 4.0]), 1)
    assert np.array_equal(M, [[1, 2], [2, 4]])
    assert np.linalg.matrix_rank(M) == 1


def test_moment_matrix_two_atoms_pd():
    M = moment_matrix(MomentVector(1, 2, [1.0, 0.5, 0.5]), 1)
    assert np.allclose(M, [[1, 0.5], [0.5, 0.5]])
    assert np.linalg.eigvalsh(M).min() > 0


def test_first_moment_matrix_layout_three_variables():
    # basis 1, x1, x2, z in graded lex order
    y = MomentVector(3, 2, np.arange(10, dtype=float))
    M = moment_matrix(y, 1)
    B = MonomialBasis(3, 2)
    for i, a in enumerate(MonomialBasis(3, 1).monomials):
        for j, b in enumerate(MonomialBasis(3, 1).monomials):
            assert M[i, j] == y.values[B.position(tuple(p + q for p, q in zip(a, b)))]
    assert M[0, 0] == 0.0 and M.shape == (4, 4)


def test_insufficient_order():
    with pytest.raises(MomentError):
        moment_matrix(MomentVector(1, 2, [1, 0, 0]), 2)


def test_localizing_examples():
    x = Polynomial.variable(1, 0)
    y = dirac(0.5, 2)
    assert np.allclose(localizing_matrix(1 - x * x, y, 0), [[0.75]])
    assert np.allclose(localizing_matrix(x - 1, dirac(2.0, 2), 0), [[1.0]])
    y4 = MomentVector(1, 4, [1, 0.2, 0.3, 0.1, 0.25])
    assert np.array_equal(localizing_matrix(Polynomial.constant(1, 1.0), y4, 2), moment_matrix(y4, 2))


def test_basis_matrices_univariate():
    B = basis_matrices(Polynomial.constant(1, 1.0), 1)
    assert np.array_equal(B.matrix((0,)), [[1, 0], [0, 0]])
    assert np.array_equal(B.matrix((1,)), [[0, 1], [1, 0]])
    assert np.array_equal(B.matrix((2,)), [[0, 0], [0, 1]])


def test_basis_matrices_reconstruction(rng):
    theta = poly(2, {(0, 0): 1.0, (2, 0): -1.0, (1, 1): 0.5})
    d = 2
    B = basis_matrices(theta, d)
    order = 2 * d + theta.degree
    assert len(B.nonzero_monomials()) <= basis_size(2, order)
    for _ in range(100):
        y = MomentVector(2, order, rng.normal(size=basis_size(2, order)))
        assert np.allclose(B.assemble(y), localizing_matrix(theta, y, d), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 2), st.integers(1, 3), st.integers(0, 10_000))
def test_atomic_moments_are_psd_and_localize(n, s, seed):
    rng = np.random.default_rng(seed)
    atoms = rng.uniform(-1, 1, size=(s, n))
    w = rng.dirichlet(np.ones(s))
    d = 2
    y = MomentVector.from_atoms(atoms, w, 2 * d + 2)
    g = Polynomial.constant(n, float(n))
    for v in Polynomial.variables(n):
        g = g - v * v
    assert np.linalg.eigvalsh(moment_matrix(y, d)).min() >= -1e-9
    assert np.linalg.eigvalsh(localizing_matrix(g, y, d)).min() >= -1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 2), st.integers(1, 3), st.integers(0, 10_000))
def test_rank_equals_atom_count(n, s, seed):
    rng = np.random.default_rng(seed)
    atoms = rng.uniform(0, 1, size=(s, n))
    while s > 1 and min(np.abs(a - b).max() for i, a in enumerate(atoms) for b in atoms[i + 1:]) < 0.1:
        atoms = rng.uniform(0, 1, size=(s, n))
    w = rng.dirichlet(np.ones(s)) * 0.7 + 0.3 / s
    d = 2 if n == 2 or s < 3 else 3
    y = MomentVector.from_atoms(atoms, w, 2 * d)
    sv = np.linalg.svd(moment_matrix(y, d), compute_uv=False)
    assert int((sv > 1e-9 * sv[0]).sum()) == s
