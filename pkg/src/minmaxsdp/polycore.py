"""Sparse multivariate polynomials, rational functions and basic semi-algebraic sets.

Polynomials are stored as a mapping from exponent tuples to float coefficients.
Exactly-zero coefficients are never stored, so two polynomials built from the
same terms compare equal regardless of how they were assembled.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Mapping, Sequence

import numpy as np

Monomial = tuple  # tuple[int, ...]


class PolynomialError(ValueError):
    """Raised on dimension mismatches and malformed polynomial input."""


def grlex_key(mono: Monomial) -> tuple:
    """Sort key for graded lexicographic order (x1 > x2 > ... within a degree)."""
    return (sum(mono), tuple(-e for e in mono))


def monomials_upto(nvars: int, degree: int) -> list[Monomial]:
    """All exponent tuples of total degree <= degree, in graded lex order."""
    out = []
    for d in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), d):
            e = [0] * nvars
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return out


def _coerce_coef(c) -> float:
    if isinstance(c, str):
        return float(Decimal(c))
    return float(c)


class Polynomial:
    """Immutable sparse real polynomial in ``nvars`` variables."""

    __slots__ = ("nvars", "_terms", "_hash")

    def __init__(self, nvars: int, terms: Mapping[Monomial, float] | Iterable = ()):
        if nvars < 0:
            raise PolynomialError("nvars must be non-negative")
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Monomial, float] = {}
        for mono, coef in items:
            mono = tuple(int(e) for e in mono)
            if len(mono) != nvars:
                raise PolynomialError(
                    f"exponent vector {list(mono)} has length {len(mono)}, expected {nvars}")
            if any(e < 0 for e in mono):
                raise PolynomialError(f"negative exponent in {list(mono)}")
            acc[mono] = acc.get(mono, 0.0) + _coerce_coef(coef)
        self.nvars = nvars
        self._terms = {m: c for m, c in sorted(acc.items(), key=lambda kv: grlex_key(kv[0]))
                       if c != 0.0}
        self._hash = None

    # -- constructors ---------------------------------------------------------
    @classmethod
    def constant(cls, nvars: int, value: float) -> Polynomial:
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def zero(cls, nvars: int) -> Polynomial:
        return cls(nvars)

    @classmethod
    def variable(cls, nvars: int, index: int) -> Polynomial:
        if not 0 <= index < nvars:
            raise PolynomialError(f"variable index {index} out of range for {nvars} variables")
        e = [0] * nvars
        e[index] = 1
        return cls(nvars, {tuple(e): 1.0})

    @classmethod
    def variables(cls, nvars: int) -> list[Polynomial]:
        return [cls.variable(nvars, i) for i in range(nvars)]

    # -- inspection -----------------------------------------------------------
    @property
    def terms(self) -> dict[Monomial, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coef(self, mono: Monomial) -> float:
        return self._terms.get(tuple(mono), 0.0)

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        """Total degree; the zero polynomial has degree 0 by convention here."""
        return max((sum(m) for m in self._terms), default=0)

    def degree_in(self, indices: Sequence[int]) -> int:
        return max((sum(m[i] for i in indices) for m in self._terms), default=0)

    def is_constant(self) -> bool:
        return all(sum(m) == 0 for m in self._terms)

    def is_affine(self) -> bool:
        return self.degree <= 1

    def max_abs_coef(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    # -- arithmetic -----------------------------------------------------------
    def _check(self, other: Polynomial) -> None:
        if other.nvars != self.nvars:
            raise PolynomialError(f"nvars mismatch: {self.nvars} vs {other.nvars}")

    def _lift(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.nvars, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        acc = dict(self._terms)
        for m, c in other._terms.items():
            acc[m] = acc.get(m, 0.0) + c
        return Polynomial(self.nvars, acc)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._lift(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(float(other))
        other = self._lift(other)
        if other is NotImplemented:
            return other
        acc: dict[Monomial, float] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                acc[m] = acc.get(m, 0.0) + c1 * c2
        return Polynomial(self.nvars, acc)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(1.0 / float(other))
        return NotImplemented

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise PolynomialError("exponent must be a non-negative integer")
        out = Polynomial.constant(self.nvars, 1.0)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def scale(self, s: float) -> Polynomial:
        return Polynomial(self.nvars, {m: s * c for m, c in self._terms.items()})

    # -- evaluation -----------------------------------------------------------
    def __call__(self, point) -> float:
        return self.evaluate(point)

    def evaluate(self, point) -> float:
        x = np.asarray(point, dtype=float).reshape(-1)
        if x.shape[0] != self.nvars:
            raise PolynomialError(f"point has dimension {x.shape[0]}, expected {self.nvars}")
        total = 0.0
        for m, c in self._terms.items():
            v = c
            for xi, e in zip(x, m):
                if e:
                    v *= xi ** e
            total += v
        return float(total)

    def evaluate_many(self, points) -> np.ndarray:
        """Vectorized evaluation on an (N, nvars) array."""
        X = np.atleast_2d(np.asarray(points, dtype=float))
        if X.shape[1] != self.nvars:
            raise PolynomialError(f"points have dimension {X.shape[1]}, expected {self.nvars}")
        out = np.zeros(X.shape[0])
        for m, c in self._terms.items():
            term = np.full(X.shape[0], c)
            for i, e in enumerate(m):
                if e:
                    term = term * X[:, i] ** e
            out += term
        return out

    # -- variable manipulation ------------------------------------------------
    def embed(self, nvars: int, positions: Sequence[int]) -> Polynomial:
        """Re-express in ``nvars`` variables, old variable i becoming positions[i]."""
        if len(positions) != self.nvars:
            raise PolynomialError("positions must list one target per variable")
        acc = {}
        for m, c in self._terms.items():
            e = [0] * nvars
            for i, k in enumerate(m):
                e[positions[i]] += k
            acc[tuple(e)] = acc.get(tuple(e), 0.0) + c
        return Polynomial(nvars, acc)

    def substitute(self, images: Sequence[Polynomial]) -> Polynomial:
        """Compose with a polynomial map: variable i is replaced by images[i]."""
        if len(images) != self.nvars:
            raise PolynomialError("need one image polynomial per variable")
        if not images:
            return self
        target = images[0].nvars
        cache: dict[tuple[int, int], Polynomial] = {}

        def power(i, k):
            key = (i, k)
            if key not in cache:
                cache[key] = images[i] ** k
            return cache[key]

        out = Polynomial.zero(target)
        for m, c in self._terms.items():
            t = Polynomial.constant(target, c)
            for i, k in enumerate(m):
                if k:
                    t = t * power(i, k)
            out = out + t
        return out

    def split(self, first: int) -> dict[Monomial, Polynomial]:
        """Group by exponents of the trailing variables.

        Returns a map from the exponent tuple of variables ``first..nvars-1`` to
        the coefficient polynomial in variables ``0..first-1``.
        """
        groups: dict[Monomial, dict] = {}
        for m, c in self._terms.items():
            groups.setdefault(m[first:], {})[m[:first]] = c
        return {k: Polynomial(first, v) for k, v in groups.items()}

    def approx_equal(self, other: Polynomial, tol: float = 1e-12) -> bool:
        self._check(other)
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coef(k) - other.coef(k)) <= tol for k in keys)

    # -- identity -------------------------------------------------------------
    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.nvars, tuple(self._terms.items())))
        return self._hash

    def __repr__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for m, c in self._terms.items():
            mono = "*".join(f"x{i + 1}" + (f"^{e}" if e > 1 else "") for i, e in enumerate(m) if e)
            parts.append(f"{c:g}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)

    # -- text form ------------------------------------------------------------
    def to_json(self) -> list[dict]:
        return [{"coef": repr(c), "exp": list(m)} for m, c in self._terms.items()]

    @classmethod
    def from_json(cls, data, nvars: int | None = None) -> Polynomial:
        if isinstance(data, (int, float)):
            if nvars is None:
                raise PolynomialError("constant polynomial needs an explicit variable count")
            return cls.constant(nvars, float(data))
        if not isinstance(data, list):
            raise PolynomialError(f"polynomial must be a list of terms, got {type(data).__name__}")
        terms = []
        for k, term in enumerate(data):
            if not isinstance(term, dict) or "coef" not in term or "exp" not in term:
                raise PolynomialError(f"term {k} must have 'coef' and 'exp' fields: {term!r}")
            exp = term["exp"]
            if not isinstance(exp, list) or not all(isinstance(e, int) and e >= 0 for e in exp):
                raise PolynomialError(f"term {k}: malformed exponent vector {exp!r}")
            if nvars is None:
                nvars = len(exp)
            if len(exp) != nvars:
                raise PolynomialError(
                    f"term {k}: exponent vector {exp} has length {len(exp)}, expected {nvars}")
            try:
                coef = _coerce_coef(term["coef"])
            except Exception as exc:
                raise PolynomialError(f"term {k}: bad coefficient {term['coef']!r}") from exc
            terms.append((tuple(exp), coef))
        if nvars is None:
            raise PolynomialError("cannot infer variable count of an empty polynomial")
        return cls(nvars, terms)


def poly_arith(a: Polynomial, b: Polynomial | float, op: str) -> Polynomial:
    """Functional form of the ring operations: op in {add, sub, mul, scale}."""
    if op == "scale":
        return a.scale(float(b))
    if not isinstance(b, Polynomial):
        raise PolynomialError("binary operations need two polynomials")
    a._check(b)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise PolynomialError(f"unknown operation {op!r}")


def poly_eval(p: Polynomial, point) -> float:
    return p.evaluate(point)


def interval_bounds(p: Polynomial, box: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Guaranteed enclosure of p over a box by monomial-wise interval arithmetic."""
    if len(box) != p.nvars:
        raise PolynomialError("box dimension mismatch")
    lo_sum = hi_sum = 0.0
    for m, c in p.items():
        lo, hi = 1.0, 1.0
        for (a, b), e in zip(box, m):
            if not e:
                continue
            cands = (a ** e, b ** e)
            plo, phi = min(cands), max(cands)
            if e % 2 == 0 and a < 0 < b:
                plo = 0.0
            prods = (lo * plo, lo * phi, hi * plo, hi * phi)
            lo, hi = min(prods), max(prods)
        if c >= 0:
            lo_sum += c * lo
            hi_sum += c * hi
        else:
            lo_sum += c * hi
            hi_sum += c * lo
    return lo_sum, hi_sum


@dataclass(frozen=True)
class RationalFunction:
    """p/q; positivity of q is checked against a set by :func:`check_denominator`."""

    p: Polynomial
    q: Polynomial

    def __post_init__(self):
        if self.p.nvars != self.q.nvars:
            raise PolynomialError("numerator and denominator nvars differ")
        if self.q.is_zero():
            raise PolynomialError("zero denominator")

    @classmethod
    def polynomial(cls, p: Polynomial) -> RationalFunction:
        return cls(p, Polynomial.constant(p.nvars, 1.0))

    @property
    def nvars(self) -> int:
        return self.p.nvars

    def evaluate(self, point) -> float:
        return self.p.evaluate(point) / self.q.evaluate(point)

    def evaluate_many(self, points) -> np.ndarray:
        return self.p.evaluate_many(points) / self.q.evaluate_many(points)

    def has_unit_denominator(self) -> bool:
        return self.q == Polynomial.constant(self.q.nvars, 1.0)


@dataclass(frozen=True)
class SemiAlgebraicSet:
    """{x : g_j(x) >= 0 for all j}, optionally with a bounding box and ball bound."""

    nvars: int
    constraints: tuple = ()
    box: tuple | None = None
    ball_radius2: float | None = None
    _all: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cons = tuple(self.constraints)
        for g in cons:
            if g.nvars != self.nvars:
                raise PolynomialError(f"constraint has {g.nvars} variables, set has {self.nvars}")
        object.__setattr__(self, "constraints", cons)
        if self.box is not None:
            box = tuple((float(a), float(b)) for a, b in self.box)
            if len(box) != self.nvars or any(a > b for a, b in box):
                raise PolynomialError("box must give lo <= hi for every variable")
            object.__setattr__(self, "box", box)
        allc = cons
        if self.ball_radius2 is not None:
            ball = Polynomial.constant(self.nvars, self.ball_radius2)
            for v in Polynomial.variables(self.nvars):
                ball = ball - v * v
            allc = cons + (ball,)
        object.__setattr__(self, "_all", allc)

    @property
    def polys(self) -> tuple:
        """Defining polynomials including the ball constraint when present."""
        return self._all

    @classmethod
    def from_box(cls, box: Sequence[tuple[float, float]], *, affine: bool = False) -> SemiAlgebraicSet:
        """Box as (x_i - lo)(hi - x_i) >= 0, or as two affine constraints per side."""
        n = len(box)
        xs = Polynomial.variables(n)
        cons = []
        for v, (a, b) in zip(xs, box):
            if affine:
                cons += [v - a, b - v]
            else:
                cons.append((v - a) * (b - v))
        return cls(n, tuple(cons), box=tuple(box))

    def with_ball(self, radius2: float | None = None) -> SemiAlgebraicSet:
        if radius2 is None:
            if self.box is None:
                raise PolynomialError("ball bound needs a radius or a box")
            radius2 = sum(max(a * a, b * b) for a, b in self.box)
        return SemiAlgebraicSet(self.nvars, self.constraints, self.box, float(radius2))

    def has_compact_constraint(self) -> bool:
        """True when some constraint has a negative definite quadratic top part."""
        for g in self.polys:
            if g.degree != 2:
                continue
            Q = np.zeros((self.nvars, self.nvars))
            for m, c in g.items():
                if sum(m) != 2:
                    continue
                idx = [i for i, e in enumerate(m) for _ in range(e)]
                i, j = idx
                if i == j:
                    Q[i, i] += c
                else:
                    Q[i, j] += c / 2
                    Q[j, i] += c / 2
            if np.linalg.eigvalsh(Q).max() < 0:
                return True
        return False

    def contains(self, point, tol: float = 0.0) -> bool:
        return set_contains(self, point, tol)

    def sample(self, count: int, seed: int = 0, tol: float = 1e-9) -> np.ndarray:
        """Points of the set: quasi-random box points filtered by membership.

        Box vertices and a regular grid (for n <= 2) are included so that
        boundary behaviour is represented.
        """
        if self.box is None:
            raise PolynomialError("sampling needs a bounding box")
        pts = box_samples(self.box, count, seed)
        vals = np.column_stack([g.evaluate_many(pts) for g in self.polys]) if self.polys else None
        if vals is None:
            return pts
        return pts[(vals >= -tol).all(axis=1)]

    def to_json(self) -> dict:
        out = {"nvars": self.nvars, "constraints": [g.to_json() for g in self.constraints]}
        if self.box is not None:
            out["box"] = [list(b) for b in self.box]
        if self.ball_radius2 is not None:
            out["ball_radius2"] = self.ball_radius2
        return out


def box_samples(box, count: int, seed: int = 0) -> np.ndarray:
    from scipy.stats import qmc

    n = len(box)
    lo = np.array([a for a, _ in box])
    hi = np.array([b for _, b in box])
    m = max(1, int(math.ceil(math.log2(max(count, 2)))))
    sob = qmc.Sobol(d=n, scramble=True, seed=seed).random_base2(m)[:count]
    pts = [lo + sob * (hi - lo)]
    if n <= 10:
        pts.append(np.array(list(itertools.product(*box)), dtype=float))
    if n <= 2:
        side = max(2, int(round(count ** (1.0 / n))))
        axes = [np.linspace(a, b, side) for a, b in box]
        pts.append(np.array(list(itertools.product(*axes)), dtype=float))
    return np.vstack(pts)


def set_contains(K: SemiAlgebraicSet, point, tol: float = 0.0) -> bool:
    if tol < 0:
        raise PolynomialError("tol must be non-negative")
    x = np.asarray(point, dtype=float).reshape(-1)
    if x.shape[0] != K.nvars:
        raise PolynomialError(f"point has dimension {x.shape[0]}, set has {K.nvars}")
    return all(g.evaluate(x) >= -tol for g in K.polys)


def check_denominator(q: Polynomial, K: SemiAlgebraicSet, *, samples: int = 1000,
                      seed: int = 0) -> float:
    """Smallest sampled value of q over K (falls back to the whole box when no
    sample lands in K, which is the stronger check).

    Raises PolynomialError when a nonpositive value is seen.
    """
    if K.box is None:
        raise PolynomialError("denominator check needs a bounding box")
    pts = K.sample(samples, seed)
    if len(pts) == 0:
        pts = box_samples(K.box, samples, seed)
    vals = q.evaluate_many(pts)
    worst = float(vals.min())
    if worst <= 0:
        raise PolynomialError(f"denominator is nonpositive ({worst:g}) at a sampled point of the set")
    return worst
