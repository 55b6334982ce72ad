"""Minimizing f0 + max_i p_i/q_i over a compact basic semi-algebraic set.

The problem is lifted with one extra variable z bounded by the branch values,
then attacked with the moment hierarchy: at order r the relaxation minimizes
L_y(p0 + z q0) over pseudo-moments y of degree 2r subject to positive
semidefinite moment and localizing matrices and the normalization
L_y(q0) = 1.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from . import sdpgate
from .atomreco import AtomicMeasure, flat_test, numeric_rank, search_extraction
from .momentkit import MomentVector, basis_matrices, basis_size, moment_matrix, riesz_row
from .polycore import (Polynomial, PolynomialError, RationalFunction, SemiAlgebraicSet,
                       check_denominator, interval_bounds, monomials_upto)

log = logging.getLogger(__name__)


class MrfError(ValueError):
    """Invalid problem data or options (bad order, missing box, ...)."""


@dataclass(frozen=True)
class MrfProblem:
    K: SemiAlgebraicSet
    f0: RationalFunction
    branches: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        n = self.K.nvars
        for f in (self.f0,) + self.branches:
            if f.nvars != n:
                raise MrfError(f"function has {f.nvars} variables, set has {n}")

    @property
    def nvars(self) -> int:
        return self.K.nvars

    def objective(self, x) -> float:
        val = self.f0.evaluate(x)
        if self.branches:
            val += max(f.evaluate(x) for f in self.branches)
        return val

    def objective_many(self, X) -> np.ndarray:
        val = self.f0.evaluate_many(X)
        if self.branches:
            val = val + np.max(np.column_stack([f.evaluate_many(X) for f in self.branches]), axis=1)
        return val

    def check_denominators(self, samples: int = 1000, seed: int = 0) -> None:
        for k, f in enumerate((self.f0,) + self.branches):
            if f.q.is_constant():
                if f.q.coef((0,) * self.nvars) <= 0:
                    raise PolynomialError(f"constant denominator of function {k} is not positive")
                continue
            if self.K.box is None:
                raise MrfError("a bounding box is needed to check non-constant denominators")
            check_denominator(f.q, self.K, samples=samples, seed=seed)


@dataclass(frozen=True)
class AffineMap:
    """x_full = base + basis @ x_reduced."""

    base: np.ndarray
    basis: np.ndarray

    def __call__(self, xr) -> np.ndarray:
        return self.base + self.basis @ np.asarray(xr, dtype=float)

    @classmethod
    def identity(cls, n: int) -> AffineMap:
        return cls(np.zeros(n), np.eye(n))


def _affine_parts(g: Polynomial):
    n = g.nvars
    lin = np.array([g.coef(tuple(int(i == j) for j in range(n))) for i in range(n)])
    return g.coef((0,) * n), lin


def find_equalities(K: SemiAlgebraicSet):
    """Pairs (a, b) of affine constraints with g_a + g_b identically zero."""
    cons = K.constraints
    pairs, used = [], set()
    for a, ga in enumerate(cons):
        if a in used or not ga.is_affine() or ga.is_constant():
            continue
        for b in range(a + 1, len(cons)):
            if b in used:
                continue
            if (ga + cons[b]).approx_equal(Polynomial.zero(K.nvars), 1e-12):
                pairs.append((a, b))
                used |= {a, b}
                break
    return pairs


def eliminate_equalities(prob: MrfProblem) -> tuple[MrfProblem, AffineMap]:
    """Substitute out one variable per affine equality constraint.

    Pairs of opposing affine inequalities leave the feasible set without
    interior, which no interior-point method tolerates; removing them keeps
    the relaxations strictly feasible. The pivot of each equality is its last
    variable with a non-negligible coefficient.
    """
    K = prob.K
    pairs = find_equalities(K)
    if not pairs:
        return prob, AffineMap.identity(K.nvars)
    n = K.nvars
    # affine map built by sequential substitution
    images = Polynomial.variables(n)
    free = list(range(n))
    eqs = [K.constraints[a] for a, _ in pairs]
    for g in eqs:
        g = g.substitute(images)
        c0, lin = _affine_parts(g)
        cand = [i for i in free if abs(lin[i]) > 1e-9 * max(1.0, np.abs(lin).max())]
        if not cand:
            if abs(c0) > 1e-9:
                raise MrfError("affine equalities are inconsistent")
            continue
        piv = cand[-1]
        expr = Polynomial.constant(n, -c0 / lin[piv])
        for i in free:
            if i != piv and lin[i] != 0:
                expr = expr - Polynomial.variable(n, i) * (lin[i] / lin[piv])
        sub = list(Polynomial.variables(n))
        sub[piv] = expr
        images = [im.substitute(sub) for im in images]
        free.remove(piv)
    # reduced coordinates: the surviving free variables
    m = len(free)
    to_reduced = [Polynomial.zero(m)] * n
    for k, i in enumerate(free):
        to_reduced[i] = Polynomial.variable(m, k)
    red_images = [im.substitute(to_reduced) for im in images]
    base = np.array([im.coef((0,) * m) for im in red_images])
    basis = np.array([[im.coef(tuple(int(j == k) for j in range(m))) for k in range(m)]
                      for im in red_images]).reshape(n, m)
    drop = {i for p in pairs for i in p}
    cons = []
    for j, g in enumerate(K.constraints):
        if j in drop:
            continue
        gr = g.substitute(red_images)
        if gr.is_constant():
            if gr.coef((0,) * m) < -1e-9:
                raise MrfError("constraint becomes infeasible after eliminating equalities")
            continue
        cons.append(gr)
    box = None
    if K.box is not None:
        box = tuple(K.box[i] for i in free)
    Kr = SemiAlgebraicSet(m, tuple(cons), box)

    def sub_rf(f: RationalFunction) -> RationalFunction:
        return RationalFunction(f.p.substitute(red_images), f.q.substitute(red_images))

    red = MrfProblem(Kr, sub_rf(prob.f0), tuple(sub_rf(f) for f in prob.branches))
    return red, AffineMap(base, basis)


def add_affine_products(prob: MrfProblem) -> MrfProblem:
    """Append g_a * g_b for affine constraints whose supports overlap.

    The products are redundant on K, but an affine constraint's localizing
    matrix at order r only reaches moments of degree 2r - 1, whereas its
    quadratic products reach degree 2r. This tightens every relaxation.
    """
    cons = list(prob.K.constraints)
    aff = [g for g in cons if g.is_affine() and not g.is_constant()]
    supp = [{i for m, _ in g.items() for i, e in enumerate(m) if e} for g in aff]
    extra = []
    for a in range(len(aff)):
        for b in range(a + 1, len(aff)):
            if supp[a] & supp[b]:
                prod = aff[a] * aff[b]
                if not any(prod.approx_equal(h, 1e-12) for h in cons + extra):
                    extra.append(prod)
    if not extra:
        return prob
    K = SemiAlgebraicSet(prob.K.nvars, tuple(cons + extra), prob.K.box, prob.K.ball_radius2)
    return MrfProblem(K, prob.f0, prob.branches)


# ---------------------------------------------------------------------------
# bounds


def polynomial_lower_bound(f: Polynomial, K: SemiAlgebraicSet, order: int | None = None,
                           tol: float = 1e-8) -> float:
    """Moment relaxation lower bound on min_K f."""
    cons = K.polys
    need = max([math.ceil(f.degree / 2)] + [math.ceil(g.degree / 2) for g in cons] + [1])
    order = need if order is None else max(order, need)
    prob = sdpgate.SdpProblem("lower-bound")
    N = basis_size(K.nvars, 2 * order)
    y = prob.add_variables("y", N)
    add_moment_constraints(prob, y, K.nvars, order, cons)
    prob.add_equality(y[:1], [1.0], 1.0)
    prob.set_objective(y, riesz_row(f, 2 * order))
    rep = sdpgate.solve(prob, tol=tol)
    if not rep.usable(1e-6):
        raise MrfError(f"bound relaxation failed: {rep.status}")
    return rep.value - 10 * tol * max(1.0, abs(rep.value))


def compute_bounds(prob: MrfProblem, mode="interval") -> tuple[float, float]:
    """(M1, M2) with M1 >= every branch value and M2 <= every branch value on K.

    ``mode`` is "interval", "relaxation" or a user pair (M1, M2).
    """
    if not prob.branches:
        raise MrfError("bounds need at least one branch")
    if isinstance(mode, (tuple, list)):
        M1, M2 = float(mode[0]), float(mode[1])
        if M1 < M2:
            raise MrfError("user bounds need M1 >= M2")
        return M1, M2
    K = prob.K
    if mode == "interval":
        if K.box is None:
            raise MrfError("interval bounds need a bounding box")

        def rng(p):
            return interval_bounds(p, K.box)
    elif mode == "relaxation":
        def rng(p):
            lo = polynomial_lower_bound(p, K)
            hi = -polynomial_lower_bound(-p, K)
            return lo, hi
    else:
        raise MrfError(f"unknown bound mode {mode!r}")
    M1, M2 = -np.inf, np.inf
    for f in prob.branches:
        plo, phi = rng(f.p)
        qlo, qhi = rng(f.q)
        if qlo <= 0 and mode == "interval":
            # interval arithmetic loses dependencies between variables
            qlo = polynomial_lower_bound(f.q, K)
        if qlo <= 0:
            raise MrfError("denominator bound is not positive; cannot bound the branch")
        M1 = max(M1, max(abs(plo), abs(phi)) / qlo)
        M2 = min(M2, plo / qhi if plo >= 0 else plo / qlo)
    return float(M1), float(M2)


# ---------------------------------------------------------------------------
# lifting


@dataclass(frozen=True)
class LiftedMrf:
    nx: int
    has_z: bool
    constraints: tuple          # h_j over nx (+1) variables
    objective: Polynomial       # h0
    normalization: Polynomial   # q0
    bounds: tuple
    half_degrees: tuple         # v_j
    r0: int
    affine_bounds: bool
    z_scale: tuple = (0.0, 1.0)  # z = center + half * u, u the lifted variable

    def z_value(self, u: float) -> float:
        return self.z_scale[0] + self.z_scale[1] * u

    @property
    def nvars(self) -> int:
        return self.nx + int(self.has_z)


def _all_affine(prob: MrfProblem) -> bool:
    return (all(g.is_affine() for g in prob.K.polys)
            and all(f.q.is_constant() and f.p.is_affine() for f in prob.branches)
            and prob.f0.p.is_affine() and prob.f0.q.is_constant())


def lift(prob: MrfProblem, bounds=None, affine_bounds: bool | None = None) -> LiftedMrf:
    n = prob.nvars
    if not prob.branches:
        cons = tuple(prob.K.polys)
        h0, q0 = prob.f0.p, prob.f0.q
        has_z = False
        bounds = None
        affine = False
    else:
        if bounds is None:
            raise MrfError("bounds are required when branches are present")
        M1, M2 = float(bounds[0]), float(bounds[1])
        if M1 < M2:
            raise MrfError("need M1 >= M2")
        if M1 - M2 < 1e-6 * max(1.0, abs(M1)):
            # a degenerate interval has no interior; widen it, which keeps validity
            M1, M2 = M1 + 0.5, M2 - 0.5
        N = n + 1
        emb = list(range(n))
        # the lifted coordinate u ranges over [-1, 1], which keeps moments of
        # high degree in z on the same scale as those in x
        center, half = 0.5 * (M1 + M2), 0.5 * (M1 - M2)
        u = Polynomial.variable(N, n)
        z = center + half * u
        cons = [g.embed(N, emb) for g in prob.K.polys]
        for f in prob.branches:
            cons.append((z * f.q.embed(N, emb) - f.p.embed(N, emb)) * (1.0 / half))
        affine = _all_affine(prob) if affine_bounds is None else affine_bounds
        if affine:
            cons += [1.0 - u, u + 1.0]
        else:
            cons.append(1.0 - u * u)
        cons = tuple(cons)
        q0 = prob.f0.q.embed(N, emb)
        h0 = prob.f0.p.embed(N, emb) + z * q0
        has_z = True
        bounds = (M1, M2)
    v = tuple(max(1, math.ceil(h.degree / 2)) if not h.is_constant() else 0 for h in cons)
    r0 = max(list(v) + [math.ceil(h0.degree / 2), math.ceil(q0.degree / 2), 1])
    zs = (center, half) if has_z else (0.0, 1.0)
    return LiftedMrf(n, has_z, cons, h0, q0, bounds, v, r0, affine, zs)


# ---------------------------------------------------------------------------
# relaxation


def add_moment_constraints(prob: sdpgate.SdpProblem, y, nvars: int, r: int, cons, tag: str = ""):
    B = basis_matrices(Polynomial.constant(nvars, 1.0), r)
    prob.add_lmi(f"{tag}moment", B.size, y[: B.operator.shape[1]], B.operator)
    for j, h in enumerate(cons):
        if h.is_constant():
            continue
        vj = math.ceil(h.degree / 2)
        Bh = basis_matrices(h, r - vj)
        prob.add_lmi(f"{tag}loc{j}", Bh.size, y[: Bh.operator.shape[1]], Bh.operator)


@dataclass
class Relaxation:
    sdp: sdpgate.SdpProblem
    order: int
    nvars: int


def build_relaxation(L: LiftedMrf, r: int, perturbation: Polynomial | None = None) -> Relaxation:
    if r < L.r0:
        raise MrfError(f"relaxation order {r} is below the minimal order {L.r0}")
    N = L.nvars
    prob = sdpgate.SdpProblem(f"mrf-order-{r}")
    y = prob.add_variables("y", basis_size(N, 2 * r),
                           ["y" + "".join(map(str, m)) for m in monomials_upto(N, 2 * r)])
    add_moment_constraints(prob, y, N, r, L.constraints)
    prob.add_equality(y, riesz_row(L.normalization, 2 * r), 1.0)
    obj = L.objective if perturbation is None else L.objective + perturbation
    prob.set_objective(y, riesz_row(obj, 2 * r))
    return Relaxation(prob, r, N)


def random_perturbation(nvars: int, degree: int, eps: float, seed: int) -> Polynomial:
    rng = np.random.default_rng(seed)
    monos = monomials_upto(nvars, degree)
    return Polynomial(nvars, {m: eps * c for m, c in zip(monos, rng.uniform(-1, 1, len(monos)))})


# ---------------------------------------------------------------------------
# hierarchy driver


@dataclass
class OrderResult:
    order: int
    value: float
    status: str
    method: str
    rank_full: int | None
    rank_low: int | None
    flat: bool
    seconds: float
    accuracy: float
    moments: MomentVector | None = field(default=None, repr=False)
    flat_degree: int | None = None


@dataclass
class HierarchyReport:
    orders: list
    value: float
    status: str                   # certified | converged | max-order | failed
    minimizers: AtomicMeasure | None
    first_moment_point: np.ndarray | None
    lifted: LiftedMrf
    reduction: AffineMap
    messages: list = field(default_factory=list)

    @property
    def moments(self) -> MomentVector | None:
        for o in reversed(self.orders):
            if o.moments is not None:
                return o.moments
        return None

    @property
    def certified(self) -> bool:
        return self.status == "certified"


def _solve_order(L: LiftedMrf, r: int, tol: float, rank_tol: float, pert, max_iter: int):
    t0 = time.perf_counter()
    rel = build_relaxation(L, r, pert)
    rep = sdpgate.solve(rel.sdp, tol=tol, max_iter=max_iter)
    y = MomentVector(rel.nvars, 2 * r, rep.x[rel.sdp.groups["y"]]) if rep.x is not None else None
    return rel, rep, y, time.perf_counter() - t0


def _low_rank_resolve(L: LiftedMrf, r: int, cap: float, pert, tol: float, max_iter: int):
    """Minimize trace M_r(y) over the relaxation points with objective <= cap.

    Interior-point methods return maximum-rank points of the optimal face;
    when the face also holds a flat point, trace minimization tends to find it.
    """
    rel = build_relaxation(L, r, pert)
    y = rel.sdp.groups["y"]
    obj = L.objective if pert is None else L.objective + pert
    rel.sdp.add_nonneg("cap", y, -riesz_row(obj, 2 * r), cap)
    sq = Polynomial(L.nvars, {tuple(2 * e for e in m): 1.0 for m in monomials_upto(L.nvars, r)})
    rel.sdp.set_objective(y, riesz_row(sq, 2 * r))
    rep = sdpgate.solve(rel.sdp, tol=tol, max_iter=max_iter)
    if rep.x is None:
        return rep, None
    return rep, MomentVector(rel.nvars, 2 * r, rep.x[y])


def solve_hierarchy(prob: MrfProblem, r_max: int | None = None, tol: float = 1e-8,
                    rank_tol: float = 1e-6, perturb: float | None = None, seed: int = 0,
                    bounds="interval", presolve: bool = True, r_start: int | None = None,
                    early_stop: bool = True, concurrent: bool = False, max_iter: int = 100,
                    check_denominators: bool = True, accept_tol: float = 1e-6,
                    stop_value: float | None = None, products: bool = True,
                    low_rank: bool = True) -> HierarchyReport:
    """Run relaxations of increasing order until flatness or stagnation.

    ``stop_value`` is a known optimal value (zero for equilibrium problems);
    reaching it without flatness is reported as converged rather than
    max-order. When an order reaches it but no rank test passes, the order
    is re-solved for a low-rank point of the optimal face (``low_rank``).
    """
    if check_denominators:
        prob.check_denominators(seed=seed)
    work, amap = eliminate_equalities(prob) if presolve else (prob, AffineMap.identity(prob.nvars))
    if products and not _all_affine(work):
        work = add_affine_products(work)
    bnds = compute_bounds(work, bounds) if work.branches else None
    L = lift(work, bnds)
    r_lo = L.r0 if r_start is None else r_start
    if r_lo < L.r0:
        raise MrfError(f"starting order {r_lo} is below the minimal order {L.r0}")
    r_max = L.r0 + 3 if r_max is None else r_max
    if r_max < r_lo:
        raise MrfError(f"maximal order {r_max} is below the minimal order {r_lo}")
    pert = None
    if perturb:
        pert = random_perturbation(L.nvars, 2 * L.r0, perturb, seed)

    orders: list[OrderResult] = []
    messages: list[str] = []
    minimizers = None
    status = "max-order"
    fm_point = None

    pending = {}
    if concurrent:
        with ThreadPoolExecutor() as ex:
            futs = {r: ex.submit(_solve_order, L, r, tol, rank_tol, pert, max_iter)
                    for r in range(r_lo, r_max + 1)}
            pending = {r: f.result() for r, f in futs.items()}

    for r in range(r_lo, r_max + 1):
        rel, rep, y, secs = pending[r] if concurrent else _solve_order(L, r, tol, rank_tol, pert, max_iter)
        usable = rep.usable(accept_tol)
        res = OrderResult(r, rep.value, rep.status, rep.method, None, None, False, secs,
                          rep.accuracy(), y if usable else None)
        orders.append(res)
        if not usable:
            messages.append(f"order {r}: solver status {rep.status} ({rep.message})")
            if rep.status in ("infeasible", "unbounded"):
                status = "failed"
                break
            continue
        if not rep.ok:
            messages.append(f"order {r}: accepted inaccurate solution (accuracy {rep.accuracy():.1e})")
        fm = y.first_moments()
        fm_point = amap(fm[: L.nx])
        if rep.method == "lp":
            # every constraint and the objective are affine: the first moments
            # form a feasible point with the same value, so the bound is exact
            minimizers = AtomicMeasure(fm_point[None, :], np.ones(1))
            status = "certified"
            break
        r_low = r - L.r0
        res.rank_full = numeric_rank(moment_matrix(y, r), rank_tol)
        res.rank_low = numeric_rank(moment_matrix(y, r_low), rank_tol)
        t = flat_test(y, r, L.r0, rank_tol)
        res.flat = t is not None
        fx = search_extraction(y, r, L.r0, rank_tol, seed, accept=lambda m: _atoms_feasible(m, L))
        at_stop = stop_value is not None and abs(rep.value - stop_value) <= 1e-5 * max(1.0, abs(stop_value))
        if fx.measure is None and low_rank and at_stop:
            cap = max(rep.value, stop_value) + max(1e-7, 10 * rep.accuracy())
            lrep, ly = _low_rank_resolve(L, r, cap, pert, tol, max_iter)
            if ly is not None and lrep.usable(accept_tol):
                fx = search_extraction(ly, r, L.r0, rank_tol, seed,
                                       accept=lambda m: _atoms_feasible(m, L))
                if fx.measure is not None:
                    res.moments = ly
                    res.rank_full = numeric_rank(moment_matrix(ly, r), rank_tol)
                    res.rank_low = numeric_rank(moment_matrix(ly, r_low), rank_tol)
                    messages.append(f"order {r}: low-rank point found by trace minimization "
                                    f"over the optimal face")
        if fx.measure is not None:
            res.flat = True
            res.flat_degree = fx.degree
            minimizers = _map_atoms(fx.measure, L, amap)
            status = "certified"
            if fx.degree != r or t is None:
                messages.append(f"order {r}: flat at truncation degree {fx.degree} with {fx.rank} atoms")
            break
        if res.flat:
            messages.append(f"order {r}: flat but extraction failed: {fx.errors[0]}")
        if early_stop and len(orders) >= 2 and orders[-2].moments is not None:
            if abs(orders[-1].value - orders[-2].value) <= 10 * tol * max(1.0, abs(orders[-1].value)):
                status = "converged"
                break
    if not any(o.moments is not None for o in orders):
        status = "failed"
    value = next((o.value for o in reversed(orders) if o.moments is not None), np.nan)
    if status == "max-order" and stop_value is not None and value >= stop_value - 10 * tol:
        status = "converged"
    return HierarchyReport(orders, value, status, minimizers, fm_point, L, amap, messages)


def _atoms_feasible(mu: AtomicMeasure, L: LiftedMrf, tol: float = 1e-4) -> bool:
    for a in mu.atoms:
        for g in L.constraints:
            if g.evaluate(a) < -tol * max(1.0, g.max_abs_coef()):
                return False
    return True


def _map_atoms(mu: AtomicMeasure, L: LiftedMrf, amap: AffineMap) -> AtomicMeasure:
    pts = mu.atoms[:, : L.nx]
    full = np.array([amap(p) for p in pts]).reshape(len(mu), -1)
    return AtomicMeasure(full, mu.weights, mu.residual).project(range(full.shape[1])).sorted()
