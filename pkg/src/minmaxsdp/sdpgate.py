"""Block-structured semidefinite programs: modelling, solving and export.

An :class:`SdpProblem` holds scalar variables, affine matrix pencils that must
be positive semidefinite, linear equalities and a linear objective. Free Gram
matrices are just pencils whose entries are fresh variables.

:func:`solve` first asks :func:`detect_linear` whether every block larger than
1x1 can be satisfied for any values of the shared variables. If so, the
problem is a linear program and goes to HiGHS; otherwise the embedded
interior-point kernel is used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.optimize import linprog

from ._ipm import solve_ipm


class SdpError(ValueError):
    """Malformed problem (bad dimensions, unknown variables)."""


@dataclass
class Pencil:
    """size x size affine matrix ``reshape(coeffs @ x) + const`` (row-major)."""

    name: str
    size: int
    coeffs: sp.csr_matrix
    const: np.ndarray


@dataclass
class GramHandle:
    name: str
    size: int
    indices: np.ndarray       # variable index of entry (i, j), i <= j, row-major upper triangle
    operator: sp.csr_matrix   # (size*size, nvars) map from variables to vec(Z)

    def inner(self, Bop: sp.spmatrix, nvars: int) -> sp.csr_matrix:
        """Rows <Z, B_k> for each column k of ``Bop`` (shape size^2 x K)."""
        op = self.operator
        if op.shape[1] < nvars:
            op = sp.csr_matrix((op.data, op.indices, op.indptr), shape=(op.shape[0], nvars))
        return (sp.csr_matrix(Bop).T @ op).tocsr()


class SdpProblem:
    """Incrementally built conic program; variables may be added at any time."""

    def __init__(self, name: str = "sdp"):
        self.name = name
        self.var_names: list[str] = []
        self.groups: dict[str, np.ndarray] = {}
        self.pencils: list[Pencil] = []
        self._eq_rows: list[sp.csr_matrix] = []
        self._eq_rhs: list[np.ndarray] = []
        self.objective = np.zeros(0)
        self.objective_const = 0.0
        self.sense = "min"
        self.grams: dict[str, GramHandle] = {}

    # -- variables --------------------------------------------------------------
    @property
    def nvars(self) -> int:
        return len(self.var_names)

    def add_variables(self, name: str, count: int, labels=None) -> np.ndarray:
        if name in self.groups:
            raise SdpError(f"variable group {name!r} already exists")
        start = self.nvars
        labels = labels if labels is not None else [f"{name}[{k}]" for k in range(count)]
        if len(labels) != count:
            raise SdpError("label count mismatch")
        self.var_names.extend(labels)
        idx = np.arange(start, start + count)
        self.groups[name] = idx
        self.objective = np.concatenate([self.objective, np.zeros(count)])
        return idx

    def _widen(self, M, cols=None) -> sp.csr_matrix:
        M = sp.csr_matrix(M)
        if M.shape[1] > self.nvars:
            raise SdpError("matrix references undeclared variables")
        return sp.csr_matrix((M.data, M.indices, M.indptr), shape=(M.shape[0], self.nvars))

    def _scatter(self, var_idx, op) -> sp.csr_matrix:
        """Map a matrix over a subset of variables to all variables."""
        op = sp.coo_matrix(op)
        var_idx = np.asarray(var_idx, dtype=int)
        if op.shape[1] != var_idx.shape[0]:
            raise SdpError("operator columns must match the variable list")
        if var_idx.size and (var_idx.max() >= self.nvars or var_idx.min() < 0):
            raise SdpError("operator references undeclared variables")
        return sp.csr_matrix((op.data, (op.row, var_idx[op.col])), shape=(op.shape[0], self.nvars))

    # -- constraints ------------------------------------------------------------
    def add_lmi(self, name: str, size: int, var_idx, op, const=None) -> Pencil:
        """Require reshape(op @ x[var_idx]) + const to be PSD."""
        full = self._scatter(var_idx, op)
        if full.shape[0] != size * size:
            raise SdpError(f"pencil {name!r}: operator has {full.shape[0]} rows, expected {size * size}")
        const = np.zeros(size * size) if const is None else np.asarray(const, dtype=float).reshape(-1)
        if const.shape[0] != size * size:
            raise SdpError(f"pencil {name!r}: constant has wrong size")
        Cm = const.reshape(size, size)
        if not np.allclose(Cm, Cm.T):
            raise SdpError(f"pencil {name!r}: constant term is not symmetric")
        pen = Pencil(name, size, full, const)
        self.pencils.append(pen)
        return pen

    def add_gram(self, name: str, size: int) -> GramHandle:
        iu, ju = np.triu_indices(size)
        idx = self.add_variables(name, len(iu), [f"{name}[{i},{j}]" for i, j in zip(iu, ju)])
        rows, cols = [], []
        for k, (i, j) in enumerate(zip(iu, ju)):
            rows.append(i * size + j)
            cols.append(k)
            if i != j:
                rows.append(j * size + i)
                cols.append(k)
        op = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(size * size, len(iu)))
        self.add_lmi(name, size, idx, op)
        handle = GramHandle(name, size, idx, self._scatter(idx, op))
        self.grams[name] = handle
        return handle

    def add_equalities(self, rows, rhs) -> None:
        """rows: (k, nvars) matrix over all declared variables."""
        R = self._widen(rows)
        rhs = np.asarray(rhs, dtype=float).reshape(-1)
        if rhs.shape[0] != R.shape[0]:
            raise SdpError("right-hand side length mismatch")
        self._eq_rows.append(R)
        self._eq_rhs.append(rhs)

    def add_equality(self, var_idx, coefs, rhs: float) -> None:
        self.add_equalities(self._scatter(var_idx, np.atleast_2d(coefs)), [rhs])

    def add_nonneg(self, name: str, var_idx, coefs, const: float = 0.0) -> Pencil:
        return self.add_lmi(name, 1, var_idx, np.atleast_2d(coefs), [const])

    def set_objective(self, var_idx, coefs, const: float = 0.0, sense: str = "min") -> None:
        if sense not in ("min", "max"):
            raise SdpError("sense must be 'min' or 'max'")
        c = np.zeros(self.nvars)
        np.add.at(c, np.asarray(var_idx, dtype=int), np.asarray(coefs, dtype=float))
        self.objective = c
        self.objective_const = float(const)
        self.sense = sense

    # -- assembled data ---------------------------------------------------------
    def equalities(self) -> tuple[sp.csr_matrix, np.ndarray]:
        if not self._eq_rows:
            return sp.csr_matrix((0, self.nvars)), np.zeros(0)
        R = sp.vstack([self._widen(r) for r in self._eq_rows]).tocsr()
        return R, np.concatenate(self._eq_rhs)

    def pencil_ops(self) -> list[Pencil]:
        return [Pencil(p.name, p.size, self._widen(p.coeffs), p.const) for p in self.pencils]

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.nvars)
        c[: self.objective.shape[0]] = self.objective
        return c

    def evaluate_pencils(self, x) -> dict:
        return {p.name: (p.coeffs @ x).reshape(p.size, p.size) + p.const.reshape(p.size, p.size)
                for p in self.pencil_ops()}

    def residuals(self, x) -> dict:
        """Feasibility measures of a candidate point."""
        A, b = self.equalities()
        eq = float(np.max(np.abs(A @ x - b), initial=0.0))
        eig = min((float(la.eigvalsh(0.5 * (M + M.T))[0]) for M in self.evaluate_pencils(x).values()),
                  default=np.inf)
        return {"equality": eq, "min_eigenvalue": eig}

    def summary(self) -> dict:
        return {"variables": self.nvars, "blocks": [p.size for p in self.pencils],
                "equalities": int(self.equalities()[0].shape[0])}


@dataclass
class SolveReport:
    status: str
    value: float
    x: np.ndarray = field(repr=False)
    blocks: dict = field(repr=False, default_factory=dict)
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    gap: float = np.nan
    iterations: int = 0
    method: str = "ipm"
    message: str = ""
    dual_value: float = np.nan

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def accuracy(self) -> float:
        return float(np.nanmax([self.primal_residual, self.dual_residual, self.gap]))

    def usable(self, tol: float = 1e-5) -> bool:
        """Optimal, or stopped early with every measure below ``tol``."""
        return self.ok or (self.status in ("max-iterations", "numerical-failure")
                           and self.accuracy() <= tol)

    def group(self, problem: SdpProblem, name: str) -> np.ndarray:
        return self.x[problem.groups[name]]


# ---------------------------------------------------------------------------
# linear detection


def _fixed_variables(A: sp.csr_matrix, b: np.ndarray) -> dict:
    fixed = {}
    for i in range(A.shape[0]):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        if hi - lo == 1 and A.data[lo] != 0:
            fixed[int(A.indices[lo])] = b[i] / A.data[lo]
    return fixed


def _usage(problem: SdpProblem, pens: list[Pencil]):
    """Per-variable sets of pencils using it, plus variables used elsewhere."""
    A, _ = problem.equalities()
    shared = set(np.flatnonzero(problem.objective_vector())) | set(np.unique(A.indices).tolist())
    users: dict[int, set] = {}
    for k, p in enumerate(pens):
        for v in np.unique(p.coeffs.indices):
            users.setdefault(int(v), set()).add(k)
    return users, shared


def _elimination_plan(problem: SdpProblem):
    """Return (eliminable pencil ids, plan per pencil) or None when some
    block of size >= 2 genuinely constrains the shared variables."""
    pens = problem.pencil_ops()
    A, b = problem.equalities()
    fixed = _fixed_variables(A, b)
    users, shared = _usage(problem, pens)
    plan = {}
    for k, p in enumerate(pens):
        if p.size == 1:
            continue
        if p.name in problem.grams:
            # Gram blocks carry SOS certificates and are never treated as linear
            return None
        s = p.size
        C = p.coeffs
        entry_vars = [C.indices[C.indptr[r]:C.indptr[r + 1]] for r in range(s * s)]
        entry_vals = [C.data[C.indptr[r]:C.indptr[r + 1]] for r in range(s * s)]

        def private(v):
            return v not in shared and users.get(int(v), set()) == {k}

        S = set()
        diag_var = {}
        for i in range(s):
            vs, cs = entry_vars[i * s + i], entry_vals[i * s + i]
            if len(vs) == 1 and cs[0] > 0 and private(vs[0]):
                S.add(i)
                diag_var[i] = int(vs[0])
        changed = True
        while changed:
            changed = False
            for i in sorted(S):
                v = diag_var[i]
                for r in range(s * s):
                    a, c = divmod(r, s)
                    if (a not in S or c not in S) and v in entry_vars[r]:
                        S.discard(i)
                        changed = True
                        break
                    if (a, c) != (i, i) and a == c and v in entry_vars[r]:
                        S.discard(i)
                        changed = True
                        break
        T = [i for i in range(s) if i not in S]
        if not S:
            return None
        TT = np.zeros((len(T), len(T)))
        for a_, a in enumerate(T):
            for c_, c in enumerate(T):
                r = a * s + c
                val = p.const[r]
                for v, cv in zip(entry_vars[r], entry_vals[r]):
                    if int(v) not in fixed:
                        return None
                    val += cv * fixed[int(v)]
                TT[a_, c_] = val
        if T and la.eigvalsh(0.5 * (TT + TT.T))[0] <= 1e-10 * max(1.0, np.abs(TT).max()):
            return None
        private_vars = {int(v) for r in range(s * s) for v in entry_vars[r] if private(v)}
        plan[k] = (sorted(S), T, diag_var, private_vars)
    return plan


def detect_linear(problem: SdpProblem) -> bool:
    """True when every PSD block is 1x1 or can be satisfied for any values of
    the variables it shares with the rest of the problem."""
    return _elimination_plan(problem) is not None


def _solve_lp(problem: SdpProblem, plan) -> SolveReport:
    pens = problem.pencil_ops()
    A, b = problem.equalities()
    c = problem.objective_vector()
    eliminated = set()
    for k, (_, _, _, pv) in plan.items():
        eliminated |= pv
    keep = np.array([v for v in range(problem.nvars) if v not in eliminated], dtype=int)
    rows, rhs = [], []
    for k, p in enumerate(pens):
        if p.size == 1:
            rows.append(-p.coeffs[:, keep])
            rhs.append(p.const)
    A_ub = sp.vstack(rows).tocsr() if rows else None
    b_ub = np.concatenate(rhs) if rhs else None
    sign = 1.0 if problem.sense == "min" else -1.0
    A_eq = A[:, keep] if A.shape[0] else None
    res = linprog(sign * c[keep], A_ub=A_ub, b_ub=b_ub, A_eq=A_eq,
                  b_eq=b if A.shape[0] else None, bounds=(None, None), method="highs")
    x = np.zeros(problem.nvars)
    status = {0: "optimal", 1: "max-iterations", 2: "infeasible", 3: "unbounded"}.get(res.status,
                                                                                         "numerical-failure")
    if res.x is not None:
        x[keep] = res.x
        _reconstruct(pens, plan, x)
    value = float(c @ x) + problem.objective_const if res.x is not None else np.nan
    blocks = problem.evaluate_pencils(x)
    pres = 0.0
    if A.shape[0]:
        pres = float(np.max(np.abs(A @ x - b)))
    return SolveReport(status, value, x, blocks, pres, 0.0, 0.0, int(getattr(res, "nit", 0)),
                       "lp", res.message, value)


def _reconstruct(pens, plan, x):
    """Fill eliminated variables so every eliminated block is positive definite."""
    for k, (S, T, diag_var, pv) in plan.items():
        p = pens[k]
        s = p.size
        for v in pv:
            x[v] = 0.0
        M = ((p.coeffs @ x) + p.const).reshape(s, s)
        M = 0.5 * (M + M.T)
        if T:
            TT = M[np.ix_(T, T)]
            CT = M[np.ix_(T, S)]
            need = CT.T @ la.solve(TT, CT, assume_a="pos")
        else:
            need = np.zeros((len(S), len(S)))
        D = M[np.ix_(S, S)] - need
        for a, i in enumerate(S):
            off = np.sum(np.abs(D[a])) - abs(D[a, a])
            coef = p.coeffs[i * s + i, diag_var[i]]
            x[diag_var[i]] = (need[a, a] + off + 1.0 - (M[i, i] - x[diag_var[i]] * coef)) / coef


# ---------------------------------------------------------------------------
# interior point path


def _independent_rows(A: np.ndarray, b: np.ndarray, tol=1e-10):
    if A.shape[0] == 0:
        return A, b, 0.0
    Q, R, piv = la.qr(A.T, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > tol * max(1.0, d.max() if d.size else 1.0)))
    keep = np.sort(piv[:rank])
    # consistency of the dropped rows
    Ak, bk = A[keep], b[keep]
    xls = la.lstsq(Ak, bk)[0] if rank else np.zeros(A.shape[1])
    incons = float(np.max(np.abs(A @ xls - b), initial=0.0))
    return Ak, bk, incons


def solve(problem: SdpProblem, tol: float = 1e-8, max_iter: int = 100, allow_lp: bool = True,
          verbose: bool = False) -> SolveReport:
    """Solve; a problem with an all-linear structure goes through the LP path."""
    if problem.nvars == 0:
        raise SdpError("problem has no variables")
    if allow_lp:
        plan = _elimination_plan(problem)
        if plan is not None:
            return _solve_lp(problem, plan)
    pens = problem.pencil_ops()
    A, b = problem.equalities()
    Ad = A.toarray()
    # row scaling
    if Ad.shape[0]:
        rs = np.maximum(np.abs(Ad).max(axis=1), 1e-300)
        Ad, bs = Ad / rs[:, None], b / rs
    else:
        bs = b
    Ad, bs, incons = _independent_rows(Ad, bs)
    if incons > 1e-8:
        return SolveReport("infeasible", np.nan, np.zeros(problem.nvars), {}, incons,
                           message="inconsistent linear equalities")
    c = problem.objective_vector()
    sign = 1.0 if problem.sense == "min" else -1.0
    cscale = max(np.abs(c).max(initial=0.0), 1e-300) if np.any(c) else 1.0
    lin_rows, lin_const, blocks, psd_ids = [], [], [], []
    for k, p in enumerate(pens):
        scale = max(np.abs(p.coeffs.data).max(initial=0.0), np.abs(p.const).max(initial=0.0), 1e-300)
        if p.size == 1:
            lin_rows.append(p.coeffs / scale)
            lin_const.append(p.const / scale)
        else:
            blocks.append(((p.coeffs / scale).tocsc(), p.const / scale))
            psd_ids.append(k)
    Fl = sp.vstack(lin_rows).tocsr() if lin_rows else None
    Cl = np.concatenate(lin_const) if lin_const else None
    res = solve_ipm(sign * c / cscale, sp.csr_matrix(Ad), bs, Fl, Cl, blocks, tol=tol,
                    max_iter=max_iter, verbose=verbose)
    x = res.x
    value = float(c @ x) + problem.objective_const
    dual_value = sign * res.dual_obj * cscale + problem.objective_const
    gap = abs(res.primal_obj - res.dual_obj) / max(1.0, abs(res.primal_obj))
    gap = min(gap, abs(res.gap))
    blocks_out = problem.evaluate_pencils(x)
    return SolveReport(res.status, value, x, blocks_out, res.primal_residual, res.dual_residual, gap,
                       res.iterations, "ipm", res.message, dual_value)


# ---------------------------------------------------------------------------
# SDPA-like export


def export_sdpa(problem: SdpProblem, path) -> None:
    """Write the problem in sparse SDPA form.

    Convention: minimize c^T x subject to sum_i x_i F_i - F_0 PSD. Equalities
    become a diagonal block with the two opposing inequalities. A maximization
    is written with a negated objective; comment lines record the sense and the
    constant objective offset.
    """
    pens = problem.pencil_ops()
    A, b = problem.equalities()
    c = problem.objective_vector() * (1.0 if problem.sense == "min" else -1.0)
    lines = [f"* problem {problem.name}", f"* sense {problem.sense}",
             f"* offset {problem.objective_const!r}"]
    struct = [p.size for p in pens]
    if A.shape[0]:
        struct.append(-2 * A.shape[0])
    lines.append(str(problem.nvars))
    lines.append(str(len(struct)))
    lines.append(" ".join(str(s) for s in struct))
    lines.append(" ".join(repr(float(v)) for v in c))
    entries = []
    for blk, p in enumerate(pens, start=1):
        s = p.size
        Cm = p.const.reshape(s, s)
        for i in range(s):
            for j in range(i, s):
                if Cm[i, j] != 0:
                    entries.append((0, blk, i + 1, j + 1, -Cm[i, j]))
        coo = p.coeffs.tocoo()
        for r, v, val in zip(coo.row, coo.col, coo.data):
            i, j = divmod(int(r), s)
            if i <= j and val != 0:
                entries.append((int(v) + 1, blk, i + 1, j + 1, val))
    if A.shape[0]:
        blk = len(pens) + 1
        coo = A.tocoo()
        for r, v, val in zip(coo.row, coo.col, coo.data):
            entries.append((int(v) + 1, blk, 2 * r + 1, 2 * r + 1, val))
            entries.append((int(v) + 1, blk, 2 * r + 2, 2 * r + 2, -val))
        for r, val in enumerate(b):
            if val != 0:
                entries.append((0, blk, 2 * r + 1, 2 * r + 1, val))
                entries.append((0, blk, 2 * r + 2, 2 * r + 2, -val))
    entries.sort()
    lines += [f"{m} {k} {i} {j} {float(val)!r}" for m, k, i, j, val in entries]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sdpa(path) -> SdpProblem:
    """Read a file written by :func:`export_sdpa` (equality blocks come back as
    pairs of 1x1 inequalities)."""
    sense, offset = "min", 0.0
    body = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("*") or line.startswith('"'):
                parts = line.lstrip('*"').split()
                if len(parts) == 2 and parts[0] == "sense":
                    sense = parts[1]
                if len(parts) == 2 and parts[0] == "offset":
                    offset = float(parts[1])
                continue
            body.append(line)
    m = int(body[0])
    nblocks = int(body[1])
    struct = [int(t) for t in body[2].replace(",", " ").split()]
    if len(struct) != nblocks:
        raise SdpError("block structure length mismatch")
    c = np.array([float(t) for t in body[3].replace(",", " ").split()])
    prob = SdpProblem("sdpa")
    prob.add_variables("x", m)
    per_block: dict[int, list] = {k: [] for k in range(1, nblocks + 1)}
    for line in body[4:]:
        mi, k, i, j, val = line.split()
        per_block[int(k)].append((int(mi), int(i) - 1, int(j) - 1, float(val)))
    for k, s in enumerate(struct, start=1):
        if s > 0:
            rows, cols, vals = [], [], []
            const = np.zeros((s, s))
            for mi, i, j, val in per_block[k]:
                if mi == 0:
                    const[i, j] = const[j, i] = -val
                else:
                    rows.append(i * s + j)
                    cols.append(mi - 1)
                    vals.append(val)
                    if i != j:
                        rows.append(j * s + i)
                        cols.append(mi - 1)
                        vals.append(val)
            op = sp.csr_matrix((vals, (rows, cols)), shape=(s * s, m))
            prob.add_lmi(f"block{k}", s, np.arange(m), op, const.reshape(-1))
        else:
            n = -s
            op = np.zeros((n, m))
            const = np.zeros(n)
            for mi, i, j, val in per_block[k]:
                if mi == 0:
                    const[i] = -val
                else:
                    op[i, mi - 1] = val
            for i in range(n):
                prob.add_lmi(f"block{k}_{i}", 1, np.arange(m), op[i:i + 1], const[i:i + 1])
    coef = c if sense == "min" else -c
    prob.set_objective(np.arange(m), coef, offset, sense)
    return prob
