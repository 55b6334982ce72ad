"""Numeric rank decisions, the flatness test and atom extraction.

Extraction follows the classical recipe: factor the moment matrix, express
every monomial in terms of a small set of pivot monomials, build one
multiplication operator per variable and diagonalize a random combination of
them. The combination uses a seeded generator so reruns are identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .momentkit import MomentVector, MonomialBasis, moment_matrix


class ExtractionError(RuntimeError):
    """Atoms could not be recovered to the required residual."""


@dataclass(frozen=True)
class AtomicMeasure:
    atoms: np.ndarray      # (s, n)
    weights: np.ndarray    # (s,)
    residual: float = 0.0

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if a.shape[0] != w.shape[0]:
            raise ValueError("one weight per atom is required")
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.atoms.shape[0]

    @property
    def nvars(self) -> int:
        return self.atoms.shape[1]

    def project(self, indices) -> AtomicMeasure:
        """Image under a coordinate projection; coinciding images are merged."""
        pts = self.atoms[:, list(indices)]
        merged_pts, merged_w = [], []
        for p, w in zip(pts, self.weights):
            for k, q in enumerate(merged_pts):
                if np.max(np.abs(p - q)) <= 1e-6:
                    merged_w[k] += w
                    break
            else:
                merged_pts.append(p.copy())
                merged_w.append(w)
        return AtomicMeasure(np.array(merged_pts).reshape(len(merged_pts), len(indices)),
                             np.array(merged_w), self.residual)

    def moments(self, order: int) -> MomentVector:
        return MomentVector.from_atoms(self.atoms, self.weights, order)

    def integrate(self, f) -> float:
        return float(sum(w * f.evaluate(a) for a, w in zip(self.atoms, self.weights)))

    def sorted(self) -> AtomicMeasure:
        order = np.lexsort(self.atoms.T[::-1])
        return AtomicMeasure(self.atoms[order], self.weights[order], self.residual)


def numeric_rank(M: np.ndarray, rank_tol: float = 1e-6) -> int:
    """Number of singular values above rank_tol * max(sigma_max, 1)."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    sv = la.svdvals(M)
    return int(np.sum(sv > rank_tol * max(sv[0], 1.0)))


def gap_rank(M: np.ndarray, min_gap: float = 100.0, ceiling: float = 1e-3) -> int | None:
    """Rank read off the first pronounced drop in the singular values.

    Index k qualifies when sigma_k / sigma_{k+1} >= min_gap and sigma_{k+1}
    lies below ceiling * max(sigma_max, 1). Returns None without such a drop.
    Useful when solver noise lifts the tail above a fixed relative threshold.
    """
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    sv = la.svdvals(M)
    top = max(sv[0], 1.0)
    if sv[-1] > ceiling * top:
        return len(sv)
    for k in range(len(sv) - 1):
        if sv[k + 1] <= ceiling * top and sv[k] >= min_gap * max(sv[k + 1], 1e-300):
            return k + 1
    return None


def flat_test(y: MomentVector, d: int, r0: int, rank_tol: float = 1e-6):
    """Common rank t of M_d(y) and M_{d-r0}(y), or None when they differ."""
    if r0 > d:
        raise ValueError("r0 must not exceed d")
    big = numeric_rank(moment_matrix(y, d), rank_tol)
    small = numeric_rank(moment_matrix(y, d - r0), rank_tol)
    return big if big == small else None


def _pivot_rows(V: np.ndarray, t: int, tol: float) -> list[int]:
    """Greedy choice, in basis order, of t rows of V that are independent."""
    piv: list[int] = []
    Q = np.zeros((V.shape[1], 0))
    scale = max(np.abs(V).max(), 1e-300)
    for i in range(V.shape[0]):
        r = V[i] - Q @ (Q.T @ V[i])
        nr = np.linalg.norm(r)
        if nr > tol * scale:
            piv.append(i)
            Q = np.column_stack([Q, r / nr])
            if len(piv) == t:
                break
    return piv


def extract_atoms(y: MomentVector, d: int, t: int, rank_tol: float = 1e-6,
                  seed: int = 0, residual_tol: float = 1e-4) -> AtomicMeasure:
    """Recover t atoms and probability weights from a flat moment vector."""
    n = y.nvars
    y0 = y.values[0]
    if y0 <= 0:
        raise ExtractionError("zeroth moment must be positive")
    ynorm = MomentVector(n, y.order, y.values / y0)
    basis = MonomialBasis(n, d)
    M = moment_matrix(ynorm, d)
    lam, U = la.eigh(0.5 * (M + M.T))
    lam, U = lam[::-1][:t], U[:, ::-1][:, :t]
    if t <= 0 or lam[-1] <= 0:
        raise ExtractionError("moment matrix has fewer positive eigenvalues than the requested rank")
    V = U * np.sqrt(lam)[None, :]
    piv = _pivot_rows(V, t, max(rank_tol, 1e-9) ** 0.5 * 1e-2)
    if len(piv) < t:
        raise ExtractionError("could not find enough independent monomials")
    monos = basis.monomials
    if max(sum(monos[i]) for i in piv) > d - 1:
        raise ExtractionError("pivot monomials exceed degree d-1; rank was probably misjudged")
    Ucoef = V @ la.inv(V[piv])
    index = basis.index
    Ns = []
    for i in range(n):
        N = np.empty((t, t))
        for j, p in enumerate(piv):
            m = list(monos[p])
            m[i] += 1
            N[j] = Ucoef[index[tuple(m)]]
        Ns.append(N)
    rng = np.random.default_rng(seed)
    coef = rng.random(n)
    coef /= coef.sum()
    comb = sum(c * N for c, N in zip(coef, Ns))
    T, Q = la.schur(comb, output="real")
    if np.any(np.abs(np.diag(T, -1)) > 1e-8 * max(1.0, np.abs(T).max())):
        raise ExtractionError("multiplication operator has complex eigenvalues")
    atoms = np.array([[Q[:, k] @ Ns[i] @ Q[:, k] for i in range(n)] for k in range(t)])
    # weights from the low-degree Vandermonde system
    dw = max(d - 1, 0)
    fit = MonomialBasis(n, dw)
    Vand = np.column_stack([fit.evaluate(a) for a in atoms])
    rhs = ynorm.values[: len(fit)]
    w, *_ = la.lstsq(Vand, rhs)
    check = MonomialBasis(n, min(2 * (d - 1), y.order) if d >= 1 else 0)
    Vchk = np.column_stack([check.evaluate(a) for a in atoms])
    scale = max(1.0, np.abs(ynorm.values[: len(check)]).max())
    residual = float(np.max(np.abs(Vchk @ w - ynorm.values[: len(check)]))) / scale
    if residual > residual_tol or np.any(w < -1e-6):
        raise ExtractionError(f"weight fit residual {residual:.2e} exceeds {residual_tol:g}")
    w = np.clip(w, 0.0, None)
    return AtomicMeasure(atoms, w / w.sum(), residual).sorted()


@dataclass
class FlatExtraction:
    measure: AtomicMeasure | None
    degree: int | None      # truncation degree d at which the pair was flat
    rank: int | None
    errors: list


def search_extraction(y: MomentVector, d: int, shift: int, rank_tol: float = 1e-6,
                      seed: int = 0, accept=None, d_min: int | None = None) -> FlatExtraction:
    """Look for a flat pair (M_e, M_{e-shift}), e = d, d-1, ..., and extract from it.

    At each degree the fixed relative threshold is tried first and a
    pronounced singular value gap second. A candidate counts only when
    extraction succeeds and ``accept(measure)`` (if given) holds, so a
    misjudged rank is rejected rather than reported.
    """
    errs: list = []
    tried = set()
    lo = max(shift, 1) if d_min is None else max(d_min, shift)
    for e in range(d, lo - 1, -1):
        cands = []
        t = flat_test(y, e, shift, rank_tol)
        if t is not None:
            cands.append(t)
        big = gap_rank(moment_matrix(y, e))
        small = gap_rank(moment_matrix(y, e - shift))
        if big is not None and big == small:
            cands.append(big)
        for k in cands:
            if (e, k) in tried or k < 1:
                continue
            tried.add((e, k))
            try:
                mu = extract_atoms(y, e, k, rank_tol, seed=seed)
            except ExtractionError as exc:
                errs.append(f"degree {e}, rank {k}: {exc}")
                continue
            if accept is not None and not accept(mu):
                errs.append(f"degree {e}, rank {k}: atoms rejected")
                continue
            return FlatExtraction(mu, e, k, errs)
    return FlatExtraction(None, None, None, errs or ["no flat truncation found"])
