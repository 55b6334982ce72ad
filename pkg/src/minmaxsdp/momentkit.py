"""Monomial bases, pseudo-moment vectors, moment and localizing matrices.

Every symmetric matrix built here is an affine function of the moment vector
``y``. :func:`basis_matrices` returns that linear map as one sparse matrix so
that solvers can use it directly; the dense assembly helpers are thin wrappers.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .polycore import Monomial, Polynomial, grlex_key, monomials_upto


class MomentError(ValueError):
    """Raised when a moment vector is too short for the requested matrix."""


@functools.lru_cache(maxsize=256)
def _basis_data(nvars: int, degree: int):
    monos = tuple(monomials_upto(nvars, degree))
    return monos, {m: i for i, m in enumerate(monos)}


@dataclass(frozen=True)
class MonomialBasis:
    """Monomials of degree <= ``degree`` in graded lex order."""

    nvars: int
    degree: int

    @property
    def monomials(self) -> tuple:
        return _basis_data(self.nvars, self.degree)[0]

    @property
    def index(self) -> dict:
        return _basis_data(self.nvars, self.degree)[1]

    def __len__(self) -> int:
        return math.comb(self.nvars + self.degree, self.degree)

    def position(self, mono: Monomial) -> int:
        try:
            return self.index[tuple(mono)]
        except KeyError:
            raise MomentError(f"monomial {mono} not in basis of degree {self.degree}") from None

    def evaluate(self, point) -> np.ndarray:
        """Vector of all basis monomials evaluated at ``point``."""
        x = np.asarray(point, dtype=float)
        exps = np.array(self.monomials, dtype=int).reshape(len(self), self.nvars)
        return np.prod(x[None, :] ** exps, axis=1)


def basis_size(nvars: int, degree: int) -> int:
    return math.comb(nvars + degree, degree)


@dataclass(frozen=True)
class MomentVector:
    """Pseudo-moments y_alpha for all monomials of degree <= ``order``."""

    nvars: int
    order: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.shape[0] != basis_size(self.nvars, self.order):
            raise MomentError(
                f"moment vector of order {self.order} in {self.nvars} variables needs "
                f"{basis_size(self.nvars, self.order)} entries, got {v.shape[0]}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def basis(self) -> MonomialBasis:
        return MonomialBasis(self.nvars, self.order)

    def __getitem__(self, mono) -> float:
        return float(self.values[self.basis.position(mono)])

    def truncate(self, order: int) -> MomentVector:
        if order > self.order:
            raise MomentError("cannot truncate to a higher order")
        return MomentVector(self.nvars, order, self.values[: basis_size(self.nvars, order)])

    def first_moments(self) -> np.ndarray:
        """(y_{e_1}, ..., y_{e_n}) divided by y_0."""
        return self.values[1: self.nvars + 1] / self.values[0]

    def marginal(self, indices) -> MomentVector:
        """Moments of the image measure under projection onto ``indices``."""
        indices = list(indices)
        sub = MonomialBasis(len(indices), self.order)
        out = np.empty(len(sub))
        full = self.basis
        for k, m in enumerate(sub.monomials):
            e = [0] * self.nvars
            for i, v in zip(indices, m):
                e[i] = v
            out[k] = self.values[full.position(tuple(e))]
        return MomentVector(len(indices), self.order, out)

    @classmethod
    def from_atoms(cls, atoms, weights, order: int) -> MomentVector:
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        w = np.asarray(weights, dtype=float)
        basis = MonomialBasis(atoms.shape[1], order)
        vals = sum(wk * basis.evaluate(a) for wk, a in zip(w, atoms))
        return cls(atoms.shape[1], order, vals)


def riesz(y: MomentVector, f: Polynomial) -> float:
    """L_y(f) = sum_alpha f_alpha y_alpha."""
    if f.nvars != y.nvars:
        raise MomentError("polynomial and moment vector have different variable counts")
    if f.degree > y.order:
        raise MomentError(f"polynomial degree {f.degree} exceeds moment order {y.order}")
    idx = y.basis.index
    return float(sum(c * y.values[idx[m]] for m, c in f.items()))


def riesz_row(f: Polynomial, order: int) -> np.ndarray:
    """Coefficient vector of f in the degree-``order`` basis, so L_y(f) = row @ y."""
    idx = MonomialBasis(f.nvars, order).index
    row = np.zeros(basis_size(f.nvars, order))
    for m, c in f.items():
        if m not in idx:
            raise MomentError(f"polynomial degree {f.degree} exceeds order {order}")
        row[idx[m]] = c
    return row


@dataclass(frozen=True)
class BasisMatrixSet:
    """Linear map y -> M_d(theta, y).

    ``operator`` has shape (s*s, N) with s the size of the degree-d basis and
    N the number of moments of degree <= 2d + deg(theta). Column alpha holds
    B_alpha^theta flattened in row-major order.
    """

    nvars: int
    degree: int
    size: int
    moment_order: int
    operator: sp.csc_matrix = field(repr=False)

    def matrix(self, mono) -> np.ndarray:
        j = MonomialBasis(self.nvars, self.moment_order).position(mono)
        return self.operator[:, j].toarray().reshape(self.size, self.size)

    def nonzero_monomials(self) -> list:
        cols = np.flatnonzero(np.diff(self.operator.indptr))
        monos = MonomialBasis(self.nvars, self.moment_order).monomials
        return [monos[j] for j in cols]

    def assemble(self, y: MomentVector | np.ndarray) -> np.ndarray:
        vals = y.values if isinstance(y, MomentVector) else np.asarray(y, dtype=float)
        n = self.operator.shape[1]
        if vals.shape[0] < n:
            raise MomentError(
                f"need moments up to order {self.moment_order}, got {vals.shape[0]} entries")
        M = (self.operator @ vals[:n]).reshape(self.size, self.size)
        return M


@functools.lru_cache(maxsize=512)
def basis_matrices(theta: Polynomial, d: int) -> BasisMatrixSet:
    """Sparse representation of M_d(theta, y) = sum_alpha y_alpha B_alpha^theta.

    Results are cached per (theta, d) and are immutable.
    """
    if d < 0:
        raise MomentError("order must be non-negative")
    n = theta.nvars
    monos, _ = _basis_data(n, d)
    s = len(monos)
    order = 2 * d + theta.degree
    _, big = _basis_data(n, order)
    E = np.array(monos, dtype=int).reshape(s, n)
    pair = E[:, None, :] + E[None, :, :]
    rows, cols, vals = [], [], []
    flat = np.arange(s * s)
    for g, c in theta.items():
        tot = (pair + np.array(g, dtype=int)).reshape(-1, n)
        col = np.fromiter((big[tuple(t)] for t in tot), dtype=np.int64, count=s * s)
        rows.append(flat)
        cols.append(col)
        vals.append(np.full(s * s, c))
    if rows:
        op = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(s * s, len(big)))
    else:
        op = sp.csc_matrix((s * s, len(big)))
    op.sum_duplicates()
    op.eliminate_zeros()
    return BasisMatrixSet(n, d, s, order, op)


def moment_matrix(y: MomentVector, d: int) -> np.ndarray:
    if 2 * d > y.order:
        raise MomentError(f"moment matrix of order {d} needs moments up to {2 * d}, have {y.order}")
    return localizing_matrix(Polynomial.constant(y.nvars, 1.0), y, d)


def localizing_matrix(theta: Polynomial, y: MomentVector, d: int) -> np.ndarray:
    if theta.nvars != y.nvars:
        raise MomentError("weight polynomial and moments have different variable counts")
    if 2 * d + theta.degree > y.order:
        raise MomentError(
            f"localizing matrix of order {d} with weight degree {theta.degree} needs moments "
            f"up to {2 * d + theta.degree}, have {y.order}")
    return basis_matrices(theta, d).assemble(y)


def sorted_monomials(monos) -> list:
    return sorted(monos, key=grlex_key)
