"""Graded shift operators on a Fock-type basis.

A basis state is |nu, eps> with one integer nu_j per bosonic register and a
bitmask eps of occupied fermionic registers.  An operator is a 2^F x 2^F
matrix of cells; cell (out, in) holds terms {offset: coefficient} and acts as

    |nu, in>  ->  coefficient(nu) |nu + offset, out>.

Coefficients are Scalars in which U_j = p^nu_j, V_j = q^nu_j and N_j = nu_j
stand for the register indices, so every identity is checked for all basis
indices at once.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import flint

from . import scalars as S
from .scalars import (
    ONE,
    ZERO,
    DeformationSpec,
    SamplePoint,
    Scalar,
    N_index,
    U_index,
    V_index,
    scalar,
)


class SignatureMismatch(ValueError):
    pass


class ParityMismatch(ValueError):
    pass


class BackendMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SpaceSignature:
    bosons: tuple
    fermions: tuple

    def __post_init__(self):
        if not 1 <= len(self.bosons) <= S.MAX_REGISTERS:
            raise ValueError("need between 1 and %d bosonic registers" % S.MAX_REGISTERS)
        if len(self.fermions) > 2:
            raise ValueError("at most two fermionic registers")

    @property
    def B(self) -> int:
        return len(self.bosons)

    @property
    def F(self) -> int:
        return len(self.fermions)

    @property
    def nstates(self) -> int:
        return 1 << self.F

    def boson(self, name) -> int:
        return name if isinstance(name, int) else self.bosons.index(name)

    def fermion(self, name) -> int:
        return name if isinstance(name, int) else self.fermions.index(name)


ZSPACE = SpaceSignature(("z",), ("theta",))
LANDAU = SpaceSignature(("a", "b"), ("alpha", "beta"))


def popcount(x: int) -> int:
    return bin(x).count("1")


# ---------------------------------------------------------------------------
# coefficient functions


def _int_exps(e) -> list:
    return [int(v) for v in e]


def _strip_monomial(items: dict) -> tuple[dict, list]:
    mins = None
    for e in items:
        if mins is None:
            mins = list(e)
        else:
            for i, v in enumerate(e):
                if v < mins[i]:
                    mins[i] = v
    out = {tuple(v - m for v, m in zip(e, mins)): c for e, c in items.items()}
    return out, mins


_shift_cache: dict = {}
_SHIFT_CACHE_MAX = 200_000


def shift(f: Scalar, d: Sequence[int]) -> Scalar:
    """Substitute nu_j -> nu_j + d_j (U_j -> p^d U_j, V_j -> q^d V_j, N_j -> N_j + d)."""
    if f.num.is_zero() or not any(d):
        return f
    degs = f.degrees()
    active = []
    for j, dj in enumerate(d):
        if dj and (degs[U_index(j)] or degs[V_index(j)] or degs[N_index(j)]):
            active.append(j)
    if not active:
        return f
    key = (f.key(), tuple(d))
    hit = _shift_cache.get(key)
    if hit is not None:
        return hit
    num, den = f.num, f.den
    for j in active:
        dj = d[j]
        if degs[N_index(j)]:
            subs = list(S._GENS)
            subs[N_index(j)] = subs[N_index(j)] + dj
            num = num.compose(*subs)
            den = den.compose(*subs)
    uv = [j for j in active if degs[U_index(j)] or degs[V_index(j)]]
    if uv:
        num = _rescale(num, uv, d)
        den = _rescale(den, uv, d)
        n_items, mn = _strip_monomial(num)
        d_items, md = _strip_monomial(den)
        diff = [a - b for a, b in zip(mn, md)]
        up = [max(x, 0) for x in diff]
        down = [max(-x, 0) for x in diff]
        if any(up):
            n_items = {tuple(a + b for a, b in zip(e, up)): c for e, c in n_items.items()}
        if any(down):
            d_items = {tuple(a + b for a, b in zip(e, down)): c for e, c in d_items.items()}
        num = S._CTX.from_dict(n_items)
        den = S._CTX.from_dict(d_items)
    out = Scalar(num, den, reduced=True)._fix_lc()
    if len(_shift_cache) > _SHIFT_CACHE_MAX:
        _shift_cache.clear()
    _shift_cache[key] = out
    return out


def _rescale(poly, regs, d) -> dict:
    out = {}
    for e, c in poly.to_dict().items():
        e = _int_exps(e)
        for j in regs:
            e[S.SP] += 2 * d[j] * e[U_index(j)]
            e[S.SQ] += 2 * d[j] * e[V_index(j)]
        out[tuple(e)] = c
    return out


def evaluate(f: Scalar, nu: Sequence[int]) -> Scalar:
    """Value of a coefficient function at concrete register indices."""
    degs = f.degrees()
    if not any(degs[5:]):
        return f
    return _eval_poly(f.num, nu) / _eval_poly(f.den, nu)


def _eval_poly(poly, nu) -> Scalar:
    terms: dict = {}
    for e, c in poly.to_dict().items():
        e = _int_exps(e)
        coeff = S._to_fraction(c)
        for j, v in enumerate(nu):
            u, w, n = e[U_index(j)], e[V_index(j)], e[N_index(j)]
            e[S.SP] += 2 * v * u
            e[S.SQ] += 2 * v * w
            if n:
                coeff *= Fraction(v) ** n
            e[U_index(j)] = e[V_index(j)] = e[N_index(j)] = 0
        key = tuple(e)
        terms[key] = terms.get(key, 0) + coeff
    return Scalar.from_terms(terms)


def evaluate_numeric(f: Scalar, nu: Sequence[int], sample: SamplePoint) -> Fraction:
    return sample.evaluate(evaluate(f, nu))


def register_vars(j: int) -> tuple[Scalar, Scalar, Scalar]:
    """(p^nu_j, q^nu_j, nu_j) as coefficient functions."""
    return S.gen(U_index(j)), S.gen(V_index(j)), S.gen(N_index(j))


def number_fn(spec: DeformationSpec, register: int = 0, offset=0, plain: bool = False) -> Scalar:
    """[nu_register + offset] as a coefficient function.

    ``plain`` gives the undeformed counter nu + offset whatever the backend.
    """
    U, V, N = register_vars(register)
    if plain or spec.kind == "classical":
        return N + scalar(Fraction(offset))
    pc, qc = S.p_power(offset), S.q_power(offset)
    if spec.kind == "q":
        return (1 - qc * V) / (1 - S.Q)
    if spec.kind == "pq":
        return (pc * U - qc * V) / (S.P - S.Q)
    if spec.kind == "abpq":
        return (pc * U - qc * V) / (
            S.A_PARAM * S.p_power(offset - 1) * U - S.B_PARAM * S.q_power(offset - 1) * V
        )
    total = ZERO
    for (u, v), c in spec.table:
        total = total + scalar(c) * (pc * U) ** u * (qc * V) ** v
    return total


_ff_cache: dict = {}


def falling_factorial_fn(spec: DeformationSpec, k: int, register: int = 0, plain: bool = False) -> Scalar:
    """[nu][nu-1]...[nu-k+1] on one register; the constant 1 for k = 0."""
    if k < 0:
        raise ValueError("falling factorial depth must be nonnegative")
    key = (spec, k, register, plain)
    hit = _ff_cache.get(key)
    if hit is not None:
        return hit
    out = ONE
    for j in range(k):
        out = out * number_fn(spec, register, -j, plain)
    _ff_cache[key] = out
    return out


# ---------------------------------------------------------------------------
# operators


class GradedOperator:
    """Parity-homogeneous operator stored as {(out, in): {offset: Scalar}}."""

    __slots__ = ("sig", "parity", "cells", "backend", "_key")

    def __init__(self, sig: SpaceSignature, parity: int, cells=None, backend=None):
        self.sig = sig
        self.parity = parity & 1
        self.backend = backend
        self._key = None
        clean = {}
        for (o, i), terms in (cells or {}).items():
            if (popcount(o) + popcount(i) - self.parity) % 2:
                if any(not c.is_zero() for c in terms.values()):
                    raise ParityMismatch(f"cell ({o},{i}) incompatible with parity {self.parity}")
                continue
            kept = {tuple(d): c for d, c in terms.items() if not c.is_zero()}
            if kept:
                clean[(o, i)] = kept
        self.cells = clean

    # basic constructors ------------------------------------------------
    @classmethod
    def zero(cls, sig, parity=0, backend=None):
        return cls(sig, parity, {}, backend)

    @classmethod
    def identity(cls, sig, backend=None):
        off = (0,) * sig.B
        return cls(sig, 0, {(e, e): {off: ONE} for e in range(sig.nstates)}, backend)

    @classmethod
    def diagonal(cls, sig, coeff_by_state, backend=None):
        """Diagonal operator; ``coeff_by_state(eps)`` gives the coefficient function."""
        off = (0,) * sig.B
        return cls(sig, 0, {(e, e): {off: scalar(coeff_by_state(e))} for e in range(sig.nstates)}, backend)

    # predicates ----------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.cells

    def nterms(self) -> int:
        return sum(len(t) for t in self.cells.values())

    def reach(self) -> int:
        """Largest absolute offset component."""
        r = 0
        for terms in self.cells.values():
            for d in terms:
                for x in d:
                    r = max(r, abs(x))
        return r

    def offsets(self) -> set:
        return {d for terms in self.cells.values() for d in terms}

    def _check(self, other):
        if not isinstance(other, GradedOperator):
            raise TypeError("expected a GradedOperator")
        if self.sig != other.sig:
            raise SignatureMismatch(f"{self.sig} vs {other.sig}")
        if self.backend and other.backend and self.backend != other.backend:
            raise BackendMismatch(f"{self.backend} vs {other.backend}")
        return self.backend or other.backend

    # linear structure ------------------------------------------------------
    def __add__(self, other):
        backend = self._check(other)
        if other.is_zero():
            return self
        if self.is_zero():
            return other
        if self.parity != other.parity:
            raise ParityMismatch("cannot add operators of different parity")
        cells = {k: dict(v) for k, v in self.cells.items()}
        for k, terms in other.cells.items():
            tgt = cells.setdefault(k, {})
            for d, c in terms.items():
                prev = tgt.get(d)
                tgt[d] = c if prev is None else prev + c
        return GradedOperator(self.sig, self.parity, cells, backend)

    def __neg__(self):
        return self.scale(-ONE)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "GradedOperator":
        c = scalar(c)
        if c.is_zero():
            return GradedOperator(self.sig, self.parity, {}, self.backend)
        if c.is_one():
            return self
        cells = {k: {d: c * f for d, f in t.items()} for k, t in self.cells.items()}
        return GradedOperator(self.sig, self.parity, cells, self.backend)

    def __rmul__(self, c):
        return self.scale(c)

    def left_diag(self, f: Scalar) -> "GradedOperator":
        """Multiply every coefficient by f evaluated at the target index."""
        cells = {}
        for k, terms in self.cells.items():
            cells[k] = {d: shift(f, d) * c for d, c in terms.items()}
        return GradedOperator(self.sig, self.parity, cells, self.backend)

    # product -----------------------------------------------------------------
    def __matmul__(self, other):
        return compose(self, other)

    def __mul__(self, other):
        if isinstance(other, GradedOperator):
            return compose(self, other)
        return self.scale(other)

    # comparison ----------------------------------------------------------------
    def __eq__(self, other):
        if not isinstance(other, GradedOperator):
            return NotImplemented
        if self.sig != other.sig:
            return False
        if self.is_zero() and other.is_zero():
            return True
        if self.parity != other.parity or self.cells.keys() != other.cells.keys():
            return False
        for k, terms in self.cells.items():
            o = other.cells[k]
            if terms.keys() != o.keys():
                return False
            for d, c in terms.items():
                if c != o[d]:
                    return False
        return True

    def __hash__(self):
        return hash(self.key())

    def key(self) -> str:
        """Canonical content string (used for memo tables)."""
        if self._key is None:
            parts = [str(self.parity)]
            for k in sorted(self.cells):
                for d in sorted(self.cells[k]):
                    parts.append(f"{k[0]},{k[1]}:{d}:{self.cells[k][d].key()}")
            self._key = ";".join(parts)
        return self._key

    def sorted_terms(self):
        """(out, in, offset, coefficient) in normal-form order."""
        for k in sorted(self.cells):
            for d in sorted(self.cells[k]):
                yield k[0], k[1], d, self.cells[k][d]

    def to_json(self) -> dict:
        return {
            "parity": self.parity,
            "bosons": list(self.sig.bosons),
            "fermions": list(self.sig.fermions),
            "terms": [
                {"out": o, "in": i, "offset": list(d), "coeff": S.to_text(c)}
                for o, i, d, c in self.sorted_terms()
            ],
        }

    def to_text(self) -> str:
        if self.is_zero():
            return "0"
        lines = []
        for o, i, d, c in self.sorted_terms():
            lines.append(f"[{o}<-{i}] shift{d}: {S.to_text(c)}")
        return "\n".join(lines)

    def __repr__(self):
        return f"GradedOperator(parity={self.parity}, terms={self.nterms()})"

    def __reduce__(self):
        return (_rebuild_op, (self.sig, self.parity, self.cells, self.backend))


def _rebuild_op(sig, parity, cells, backend):
    return GradedOperator(sig, parity, cells, backend)


def compose(x: GradedOperator, y: GradedOperator) -> GradedOperator:
    """x * y: apply y first."""
    backend = x._check(y)
    if x.is_zero() or y.is_zero():
        return GradedOperator(x.sig, x.parity ^ y.parity, {}, backend)
    by_in: dict = {}
    for (o, i), terms in x.cells.items():
        by_in.setdefault(i, []).append((o, terms))
    acc: dict = {}
    for (mid, i), yterms in y.cells.items():
        for o, xterms in by_in.get(mid, ()):
            tgt = acc.setdefault((o, i), {})
            for e, g in yterms.items():
                for d, f in xterms.items():
                    off = tuple(a + b for a, b in zip(d, e))
                    term = shift(f, e) * g
                    lst = tgt.get(off)
                    if lst is None:
                        tgt[off] = [term]
                    else:
                        lst.append(term)
    cells = {k: {d: sum_scalars(v) for d, v in t.items()} for k, t in acc.items()}
    return GradedOperator(x.sig, x.parity ^ y.parity, cells, backend)


def sum_scalars(items: Sequence[Scalar]) -> Scalar:
    """Sum that groups terms by denominator before reducing."""
    if len(items) == 1:
        return items[0]
    groups: dict = {}
    for s in items:
        if s.num.is_zero():
            continue
        k = s.den.str()
        g = groups.get(k)
        if g is None:
            groups[k] = [s.den, s.num]
        else:
            g[1] = g[1] + s.num
    total = ZERO
    for den, num in groups.values():
        if num.is_zero():
            continue
        total = total + (Scalar(num, den) if not den.is_one() else Scalar(num, den, reduced=True))
    return total


def linear_combination(pairs: Iterable, sig: SpaceSignature, parity: int = 0, backend=None) -> GradedOperator:
    """Sum of c * X over (c, X) pairs, accumulated per term before reduction."""
    acc: dict = {}
    par = None
    for c, X in pairs:
        c = scalar(c)
        if c.is_zero() or X.is_zero():
            continue
        if par is None:
            par = X.parity
        elif par != X.parity:
            raise ParityMismatch("mixed parities in a linear combination")
        if backend is None:
            backend = X.backend
        for k, terms in X.cells.items():
            tgt = acc.setdefault(k, {})
            for d, f in terms.items():
                tgt.setdefault(d, []).append(c * f if not c.is_one() else f)
    cells = {k: {d: sum_scalars(v) for d, v in t.items()} for k, t in acc.items()}
    return GradedOperator(sig, parity if par is None else par, cells, backend)


def graded_commutator(x: GradedOperator, y: GradedOperator) -> GradedOperator:
    """[x, y] = xy - (-1)^{|x||y|} yx."""
    xy = compose(x, y)
    yx = compose(y, x)
    if x.parity and y.parity:
        return xy + yx
    return xy - yx


def anticommutator(x: GradedOperator, y: GradedOperator) -> GradedOperator:
    return compose(x, y) + compose(y, x)


# ---------------------------------------------------------------------------
# matrix oracle


def basis_states(sig: SpaceSignature, N: int):
    """All (nu, eps) with 0 <= nu_j <= N, in a fixed order."""
    out = []

    def rec(prefix):
        if len(prefix) == sig.B:
            for e in range(sig.nstates):
                out.append((tuple(prefix), e))
            return
        for v in range(N + 1):
            rec(prefix + [v])

    rec([])
    return out


def to_matrix(x: GradedOperator, N: int, sample: SamplePoint, reach: int | None = None):
    """Truncated matrix on occupations [0, N] plus the safe-window state indices.

    ``reach`` is the margin kept away from both truncation boundaries; by
    default the operator's own reach.
    """
    if N < x.reach():
        raise ValueError("truncation smaller than the operator reach")
    states = basis_states(x.sig, N)
    index = {s: k for k, s in enumerate(states)}
    M = flint.fmpq_mat(len(states), len(states))
    for (o, i), terms in x.cells.items():
        for d, f in terms.items():
            for nu in (s[0] for s in states if s[1] == i):
                tgt = tuple(a + b for a, b in zip(nu, d))
                k = index.get((tgt, o))
                if k is None:
                    continue
                val = sample.evaluate(evaluate(f, nu))
                if val:
                    M[k, index[(nu, i)]] = flint.fmpq(val.numerator, val.denominator)
    r = x.reach() if reach is None else reach
    window = [k for k, (nu, _) in enumerate(states) if all(r <= v <= N - r for v in nu)]
    return M, window


def window_equal(A, B, window) -> bool:
    for r in window:
        for c in window:
            if A[r, c] != B[r, c]:
                return False
    return True


# ---------------------------------------------------------------------------
# lambda scaling


def _sl_order(poly) -> int:
    return min(int(e[S.SL]) for e in poly.monoms())


def _sl_coeff(poly, order: int):
    out = {}
    for e, c in poly.to_dict().items():
        if int(e[S.SL]) == order:
            e = _int_exps(e)
            e[S.SL] = 0
            out[tuple(e)] = c
    return S._CTX.from_dict(out)


def lambda_order(c: Scalar) -> Fraction:
    """Lowest power of lambda in a nonzero scalar."""
    return Fraction(_sl_order(c.num) - _sl_order(c.den), 2)


def lambda_part(c: Scalar) -> tuple[Fraction, Scalar]:
    """(order, leading coefficient with lambda removed)."""
    a, b = _sl_order(c.num), _sl_order(c.den)
    lead = Scalar(_sl_coeff(c.num, a), _sl_coeff(c.den, b))
    return Fraction(a - b, 2), lead


def lambda_leading(x: GradedOperator) -> tuple[Fraction, GradedOperator]:
    if x.is_zero():
        raise ValueError("zero operator has no leading lambda part")
    parts = {}
    for k, terms in x.cells.items():
        for d, c in terms.items():
            parts[(k, d)] = lambda_part(c)
    order = min(o for o, _ in parts.values())
    cells: dict = {}
    for (k, d), (o, lead) in parts.items():
        if o == order:
            cells.setdefault(k, {})[d] = lead
    return order, GradedOperator(x.sig, x.parity, cells, x.backend)


# ---------------------------------------------------------------------------
# witnesses and random operators


def first_difference(x: GradedOperator, y: GradedOperator):
    """Smallest (out, in, offset) where x and y differ, with both coefficients."""
    keys = set()
    for k, terms in x.cells.items():
        keys.update((k, d) for d in terms)
    for k, terms in y.cells.items():
        keys.update((k, d) for d in terms)
    for k, d in sorted(keys):
        a = x.cells.get(k, {}).get(d, ZERO)
        b = y.cells.get(k, {}).get(d, ZERO)
        if a != b:
            return {"cell": [k[0], k[1]], "offset": list(d), "lhs": S.to_text(a), "rhs": S.to_text(b)}
    return None


def random_coeff(spec: DeformationSpec, sig: SpaceSignature, rng: random.Random, nterms: int = 2) -> Scalar:
    """Small random polynomial in the register symbols."""
    out = ZERO
    for _ in range(nterms):
        c = scalar(rng.choice([-3, -2, -1, 1, 2, 3]))
        j = rng.randrange(sig.B)
        U, V, N = register_vars(j)
        if spec.kind == "classical":
            mono = N ** rng.randrange(3)
        else:
            mono = U ** rng.randrange(2) * V ** rng.randrange(2)
            if rng.random() < 0.3:
                mono = mono * S.P
        out = out + c * mono
    if out.is_zero():
        out = ONE
    return out


def random_operator(
    sig: SpaceSignature,
    spec: DeformationSpec,
    parity: int,
    rng: random.Random,
    nterms: int = 2,
    max_offset: int = 1,
) -> GradedOperator:
    cells: dict = {}
    allowed = [
        (o, i)
        for o in range(sig.nstates)
        for i in range(sig.nstates)
        if (popcount(o) + popcount(i)) % 2 == parity
    ]
    if not allowed:
        raise ParityMismatch("no cells of the requested parity")
    for _ in range(nterms):
        k = rng.choice(allowed)
        d = tuple(rng.randint(-max_offset, max_offset) for _ in range(sig.B))
        c = random_coeff(spec, sig, rng)
        tgt = cells.setdefault(k, {})
        tgt[d] = tgt[d] + c if d in tgt else c
    op = GradedOperator(sig, parity, cells, spec.label())
    if op.is_zero():
        return random_operator(sig, spec, parity, rng, nterms, max_offset)
    return op
