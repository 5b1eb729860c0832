"""Exact coefficient field and deformed-number combinatorics.

Scalars are reduced quotients of polynomials over Q in the formal generators
sqrt(p), sqrt(q), sqrt(lambda), a, b together with the per-register index
symbols used by coefficient functions (U_j = p^nu_j, V_j = q^nu_j, N_j = nu_j).
Negative exponents are pushed into the denominator, so the same type covers
Laurent polynomials.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping

import flint

MAX_REGISTERS = 2

_BASE_NAMES = ("sp", "sq", "sl", "a", "b")
_REG_NAMES = tuple(
    f"{kind}{j}" for j in range(MAX_REGISTERS) for kind in ("U", "V", "N")
)
VAR_NAMES = _BASE_NAMES + _REG_NAMES
NVARS = len(VAR_NAMES)

SP, SQ, SL, VA, VB = range(5)


def U_index(j: int) -> int:
    return 5 + 3 * j


def V_index(j: int) -> int:
    return 6 + 3 * j


def N_index(j: int) -> int:
    return 7 + 3 * j


_CTX = flint.fmpq_mpoly_ctx.get(VAR_NAMES, "deglex")
_GENS = _CTX.gens()
_ZERO_EXP = (0,) * NVARS


class ScalarDivisionError(ZeroDivisionError):
    """Division by the zero scalar."""


class SampleError(ValueError):
    """A numeric sample point cannot evaluate an expression exactly."""


def _fmpq(x) -> flint.fmpq:
    if isinstance(x, flint.fmpq):
        return x
    if isinstance(x, int):
        return flint.fmpq(x)
    x = Fraction(x)
    return flint.fmpq(x.numerator, x.denominator)


def _to_fraction(c) -> Fraction:
    return Fraction(int(c.p), int(c.q))


def _poly_const(c) -> flint.fmpq_mpoly:
    return _CTX.constant(_fmpq(c))


def _monomial_poly(exps) -> flint.fmpq_mpoly:
    return _CTX.from_dict({tuple(exps): 1})


_ONE_POLY = _poly_const(1)
_ZERO_POLY = _poly_const(0)


def _min_exponents(d: dict) -> list[int]:
    mins = [0] * NVARS
    first = True
    for e in d:
        if first:
            mins = list(e)
            first = False
        else:
            for i, v in enumerate(e):
                if v < mins[i]:
                    mins[i] = v
    return mins


class Scalar:
    """Element of Q(sqrt p, sqrt q, sqrt lambda, a, b, U_j, V_j, N_j).

    Stored as ``num/den`` with ``gcd(num, den) == 1`` and ``den`` monic in the
    degree-lexicographic order, which makes the representation canonical.
    """

    __slots__ = ("num", "den", "_key", "_degs")

    def __init__(self, num, den=None, *, reduced=False):
        if not isinstance(num, flint.fmpq_mpoly):
            num = _poly_const(num)
        if den is None:
            den = _ONE_POLY
        elif not isinstance(den, flint.fmpq_mpoly):
            den = _poly_const(den)
        if not reduced:
            num, den = _reduce(num, den)
        self.num = num
        self.den = den
        self._key = None
        self._degs = None

    # construction -----------------------------------------------------
    @classmethod
    def from_terms(cls, terms: Mapping[tuple, object]) -> "Scalar":
        """Build from {exponent tuple: coefficient}; exponents may be negative."""
        terms = {tuple(e): _fmpq(c) for e, c in terms.items() if c != 0}
        if not terms:
            return ZERO
        mins = [min(0, m) for m in _min_exponents(terms)]
        if not any(mins):
            return cls(_CTX.from_dict(terms), _ONE_POLY, reduced=True)
        shifted = {
            tuple(v - m for v, m in zip(e, mins)): c for e, c in terms.items()
        }
        den = _monomial_poly([-m for m in mins])
        return cls(_CTX.from_dict(shifted), den)

    @classmethod
    def monomial(cls, coeff=1, **powers) -> "Scalar":
        exps = [0] * NVARS
        for name, e in powers.items():
            exps[VAR_NAMES.index(name)] = e
        return cls.from_terms({tuple(exps): coeff})

    # predicates -------------------------------------------------------
    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_one(self) -> bool:
        return self.num.is_one() and self.den.is_one()

    def is_polynomial(self) -> bool:
        return self.den.is_one()

    def degrees(self) -> tuple:
        """Per-variable max degree over numerator and denominator."""
        if self._degs is None:
            dn = self.num.degrees()
            dd = self.den.degrees()
            self._degs = tuple(max(int(x), int(y), 0) for x, y in zip(dn, dd))
        return self._degs

    def uses(self, index: int) -> bool:
        return self.degrees()[index] > 0

    def as_fraction(self) -> Fraction:
        """Value of a constant scalar as a Fraction."""
        if any(self.degrees()):
            raise ValueError(f"scalar {self} is not a rational constant")
        n = self.num.coeffs()
        d = self.den.coeffs()
        nv = _to_fraction(n[0]) if n else Fraction(0)
        return nv / _to_fraction(d[0])

    # arithmetic -------------------------------------------------------
    def __add__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        if self.num.is_zero():
            return other
        if other.num.is_zero():
            return self
        d1, d2 = self.den, other.den
        if d1 == d2:
            n = self.num + other.num
            if d1.is_one():
                return Scalar(n, d1, reduced=True)
            return Scalar(n, d1)
        g = d1.gcd(d2)
        if g.is_one():
            n = self.num * d2 + other.num * d1
            return Scalar(n, d1 * d2, reduced=_lc_one(d1 * d2))
        d1g = d1 / g
        d2g = d2 / g
        n = self.num * d2g + other.num * d1g
        g2 = n.gcd(g)
        if not g2.is_one():
            n = n / g2
            g = g / g2
        return Scalar(n, g * d1g * d2g, reduced=True)._fix_lc()

    __radd__ = __add__

    def __neg__(self):
        return Scalar(-self.num, self.den, reduced=True)

    def __sub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        if self.num.is_zero() or other.num.is_zero():
            return ZERO
        n1, d1, n2, d2 = self.num, self.den, other.num, other.den
        if d1.is_one() and d2.is_one():
            return Scalar(n1 * n2, _ONE_POLY, reduced=True)
        if not d2.is_one():
            g = n1.gcd(d2)
            if not g.is_one():
                n1 = n1 / g
                d2 = d2 / g
        if not d1.is_one():
            g = n2.gcd(d1)
            if not g.is_one():
                n2 = n2 / g
                d1 = d1 / g
        return Scalar(n1 * n2, d1 * d2, reduced=True)._fix_lc()

    __rmul__ = __mul__

    def inverse(self) -> "Scalar":
        if self.num.is_zero():
            raise ScalarDivisionError("division by zero scalar")
        return Scalar(self.den, self.num, reduced=True)._fix_lc()

    def __truediv__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return self * other.inverse()

    def __rtruediv__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return other
        return other * self.inverse()

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        return Scalar(self.num**k, self.den**k, reduced=True)

    def _fix_lc(self) -> "Scalar":
        lc = self.den.leading_coefficient()
        if lc != 1:
            inv = 1 / lc
            self.num = self.num * inv
            self.den = self.den * inv
        return self

    # comparison / hashing --------------------------------------------
    def __eq__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def key(self) -> str:
        if self._key is None:
            self._key = f"{self.num.str()}|{self.den.str()}"
        return self._key

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"Scalar({to_text(self)!r})"

    def __str__(self):
        return to_text(self)

    def __reduce__(self):
        return (_rebuild, (_poly_items(self.num), _poly_items(self.den)))

    # leading-term helpers --------------------------------------------
    def sign(self) -> int:
        """Sign of the leading numerator coefficient (0 for zero)."""
        if self.num.is_zero():
            return 0
        return 1 if self.num.leading_coefficient() > 0 else -1


def _lc_one(p) -> bool:
    return p.leading_coefficient() == 1


def _reduce(num, den):
    if den.is_zero():
        raise ScalarDivisionError("zero denominator")
    if num.is_zero():
        return _ZERO_POLY, _ONE_POLY
    if not den.is_one():
        g = num.gcd(den)
        if not g.is_one():
            num = num / g
            den = den / g
    lc = den.leading_coefficient()
    if lc != 1:
        inv = 1 / lc
        num = num * inv
        den = den * inv
    return num, den


def _poly_items(p):
    return tuple((tuple(int(v) for v in e), str(c)) for e, c in p.to_dict().items())


def _rebuild(num_items, den_items):
    num = _CTX.from_dict({e: flint.fmpq(Fraction(c).numerator, Fraction(c).denominator) for e, c in num_items})
    den = _CTX.from_dict({e: flint.fmpq(Fraction(c).numerator, Fraction(c).denominator) for e, c in den_items})
    return Scalar(num, den, reduced=True)


def _coerce(x):
    if isinstance(x, Scalar):
        return x
    if isinstance(x, (int, Fraction)):
        return Scalar(_poly_const(x), _ONE_POLY, reduced=True)
    return NotImplemented


def scalar(x) -> Scalar:
    """Coerce an int, Fraction or string like '3/4' to a Scalar."""
    if isinstance(x, Scalar):
        return x
    if isinstance(x, str):
        x = Fraction(x)
    out = _coerce(x)
    if out is NotImplemented:
        raise TypeError(f"cannot make a scalar from {x!r}")
    return out


ZERO = Scalar(_ZERO_POLY, _ONE_POLY, reduced=True)
ONE = Scalar(_ONE_POLY, _ONE_POLY, reduced=True)

SQRT_P = Scalar(_GENS[SP], reduced=True)
SQRT_Q = Scalar(_GENS[SQ], reduced=True)
SQRT_LAMBDA = Scalar(_GENS[SL], reduced=True)
P = SQRT_P * SQRT_P
Q = SQRT_Q * SQRT_Q
LAMBDA = SQRT_LAMBDA * SQRT_LAMBDA
A_PARAM = Scalar(_GENS[VA], reduced=True)
B_PARAM = Scalar(_GENS[VB], reduced=True)


def gen(index: int) -> Scalar:
    return Scalar(_GENS[index], reduced=True)


def p_power(e) -> Scalar:
    """p^e for integer or half-integer e."""
    return _half_power(SP, e)


def q_power(e) -> Scalar:
    return _half_power(SQ, e)


def lambda_power(e) -> Scalar:
    return _half_power(SL, e)


def _half_power(index: int, e) -> Scalar:
    twice = Fraction(e) * 2
    if twice.denominator != 1:
        raise ValueError(f"exponent {e} is not a half-integer")
    exps = [0] * NVARS
    exps[index] = int(twice)
    return Scalar.from_terms({tuple(exps): 1})


# ---------------------------------------------------------------------------
# text form

_PRETTY_BASE = {SP: "p", SQ: "q", SL: "lambda", VA: "a", VB: "b"}


def _var_text(i: int, e: int) -> str:
    if i in (SP, SQ, SL):
        name = _PRETTY_BASE[i]
        half = Fraction(e, 2)
        if half == 1:
            return name
        if half.denominator == 1:
            return f"{name}^{half.numerator}"
        return f"{name}^({half})"
    if i in (VA, VB):
        name = _PRETTY_BASE[i]
        return name if e == 1 else f"{name}^{e}"
    j, kind = divmod(i - 5, 3)
    if kind == 2:
        return f"n{j}" if e == 1 else f"n{j}^{e}"
    base = "p" if kind == 0 else "q"
    return f"{base}^n{j}" if e == 1 else f"{base}^({e}*n{j})"


def _coeff_text(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def poly_text(p) -> str:
    items = sorted(p.to_dict().items(), key=lambda t: (-sum(t[0]), tuple(-x for x in t[0])))
    if not items:
        return "0"
    parts = []
    for k, (e, c) in enumerate(items):
        c = _to_fraction(c)
        mono = "*".join(_var_text(i, int(v)) for i, v in enumerate(e) if v)
        neg = c < 0
        mag = -c if neg else c
        if mono:
            body = mono if mag == 1 else f"{_coeff_text(mag)}*{mono}"
        else:
            body = _coeff_text(mag)
        if k == 0:
            parts.append(f"-{body}" if neg else body)
        else:
            parts.append(f" - {body}" if neg else f" + {body}")
    return "".join(parts)


def to_text(x: Scalar) -> str:
    num = poly_text(x.num)
    if x.den.is_one():
        return num
    den = poly_text(x.den)
    if len(x.num.to_dict()) > 1:
        num = f"({num})"
    if len(x.den.to_dict()) > 1 or "*" in den:
        den = f"({den})"
    return f"{num}/{den}"


# ---------------------------------------------------------------------------
# numeric evaluation

def _exact_sqrt(x: Fraction) -> Fraction:
    if x < 0:
        raise SampleError(f"negative value {x} has no rational square root")
    n, d = x.numerator, x.denominator
    rn, rd = math.isqrt(n), math.isqrt(d)
    if rn * rn != n or rd * rd != d:
        raise SampleError(f"{x} is not the square of a rational")
    return Fraction(rn, rd)


@dataclass(frozen=True)
class SamplePoint:
    """Rational values of p, q, lambda, a, b used by the numeric oracle.

    Odd powers of sqrt(p), sqrt(q), sqrt(lambda) can only be evaluated when the
    corresponding value is a rational square.
    """

    p: Fraction = Fraction(49, 25)
    q: Fraction = Fraction(9, 25)
    lam: Fraction = Fraction(4, 9)
    a: Fraction = Fraction(5, 4)
    b: Fraction = Fraction(4, 3)

    def _base(self, i: int, e: int) -> Fraction:
        if i == VA:
            return self.a**e
        if i == VB:
            return self.b**e
        val = {SP: self.p, SQ: self.q, SL: self.lam}[i]
        if e % 2 == 0:
            return val ** (e // 2)
        return _exact_sqrt(val) ** e

    def evaluate(self, x: Scalar) -> Fraction:
        if any(x.degrees()[5:]):
            raise SampleError(f"scalar {x} still depends on register indices")
        num = self._eval_poly(x.num)
        den = self._eval_poly(x.den)
        if den == 0:
            raise SampleError(f"sample point annihilates the denominator of {x}")
        return num / den

    def _eval_poly(self, p) -> Fraction:
        total = Fraction(0)
        for e, c in p.to_dict().items():
            e = tuple(int(v) for v in e)
            term = _to_fraction(c)
            for i in range(5):
                if e[i]:
                    term *= self._base(i, e[i])
            total += term
        return total

    def to_dict(self) -> dict:
        return {k: str(getattr(self, k)) for k in ("p", "q", "lam", "a", "b")}


# ---------------------------------------------------------------------------
# deformation backends

KINDS = ("q", "pq", "abpq", "classical", "series")


@dataclass(frozen=True)
class DeformationSpec:
    """Choice of the deformation function R plus the oracle sample point.

    ``table`` is only used by the ``series`` kind: a tuple of ((u, v), r_uv)
    giving R(s, t) = sum r_uv s^u t^v.
    """

    kind: str = "pq"
    table: tuple = ()
    sample: SamplePoint = field(default_factory=SamplePoint)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown deformation kind {self.kind!r}")
        if self.kind == "series":
            if not self.table:
                raise ValueError("series deformation needs a coefficient table")
            if sum(Fraction(c) for _, c in self.table) != 0:
                raise ValueError("series table must satisfy R(1,1)=0 (coefficients sum to zero)")
        self._check_sample()

    def _check_sample(self):
        s = self.sample
        if self.kind in ("pq", "abpq") and s.p == s.q:
            raise ValueError("sample point has p == q")
        if self.kind == "q" and s.q == 1:
            raise ValueError("sample point has q == 1")
        if self.kind == "abpq" and s.a / s.p == s.b / s.q:
            raise ValueError("sample point annihilates a/p - b/q")

    @property
    def deformed(self) -> bool:
        return self.kind != "classical"

    @property
    def needs_k(self) -> bool:
        """True when the paper leaves the K(P,Q) prefactor undetermined."""
        return self.kind == "series"

    def label(self) -> str:
        if self.kind == "series":
            terms = ",".join(f"{u}:{v}:{c}" for (u, v), c in self.table)
            return f"series[{terms}]"
        return self.kind

    @classmethod
    def series_from_file(cls, path, sample: SamplePoint | None = None) -> "DeformationSpec":
        """Load a table from JSON: {"offset": l, "coefficients": [[u, v, "r"], ...]}."""
        with open(path) as fh:
            data = json.load(fh)
        offset = int(data.get("offset", 0))
        table = []
        for u, v, c in data["coefficients"]:
            if u < -offset or v < -offset:
                raise ValueError(f"exponent ({u},{v}) below the table offset -{offset}")
            table.append(((int(u), int(v)), str(Fraction(c))))
        return cls("series", tuple(table), sample or SamplePoint())


def _series_value(spec: DeformationSpec, pu: Scalar, qv: Scalar) -> Scalar:
    total = ZERO
    for (u, v), c in spec.table:
        total = total + scalar(c) * pu**u * qv**v
    return total


@lru_cache(maxsize=4096)
def deformed_number(spec: DeformationSpec, nu) -> Scalar:
    """[nu] = R(p^nu, q^nu) for integer or half-integer nu."""
    nu = Fraction(nu)
    if (nu * 2).denominator != 1:
        raise ValueError(f"{nu} is not a half-integer")
    kind = spec.kind
    if kind == "classical":
        return scalar(nu)
    pn, qn = p_power(nu), q_power(nu)
    if kind == "q":
        return (1 - qn) / (1 - Q)
    if kind == "pq":
        return (pn - qn) / (P - Q)
    if kind == "abpq":
        return (pn - qn) / (A_PARAM * p_power(nu - 1) - B_PARAM * q_power(nu - 1))
    return _series_value(spec, pn, qn)


@lru_cache(maxsize=1024)
def deformed_factorial(spec: DeformationSpec, n: int) -> Scalar:
    if n < 0:
        raise ValueError("factorial of a negative integer")
    out = ONE
    for j in range(1, n + 1):
        out = out * deformed_number(spec, j)
    return out


@lru_cache(maxsize=4096)
def deformed_binomial(spec: DeformationSpec, n: int, k: int) -> Scalar:
    if k < 0 or n < 0:
        raise ValueError("binomial indices must be nonnegative")
    if k > n:
        raise ValueError(f"binomial C^{k}_{n} needs n >= k")
    return deformed_factorial(spec, n) / (
        deformed_factorial(spec, k) * deformed_factorial(spec, n - k)
    )


def binomial_or_zero(spec: DeformationSpec, n: int, k: int) -> Scalar:
    """C^k_n, taken as zero outside 0 <= k <= n."""
    if k < 0 or n < 0 or k > n:
        return ZERO
    return deformed_binomial(spec, n, k)


@lru_cache(maxsize=4096)
def falling_factorial(spec: DeformationSpec, n, k: int) -> Scalar:
    """[n][n-1]...[n-k+1]; vanishes automatically for 0 <= n < k."""
    if k < 0:
        raise ValueError("falling factorial depth must be nonnegative")
    out = ONE
    for j in range(k):
        out = out * deformed_number(spec, Fraction(n) - j)
    return out


@lru_cache(maxsize=4096)
def prefactor_ratio(spec: DeformationSpec, M) -> Scalar:
    """[-2M]/[-M] with the removable singularity at M = 0 resolved when possible."""
    M = Fraction(M)
    if spec.kind == "classical":
        return scalar(2)
    if spec.kind == "pq":
        return p_power(-M) + q_power(-M)
    if spec.kind == "q":
        return 1 + q_power(-M)
    den = deformed_number(spec, -M)
    if den.is_zero():
        raise ScalarDivisionError(f"[-2M]/[-M] is 0/0 at M={M} for the {spec.kind} backend")
    return deformed_number(spec, -2 * M) / den


def parse_rational(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational number: {text!r}") from exc


def product(items: Iterable[Scalar]) -> Scalar:
    out = ONE
    for x in items:
        out = out * x
    return out
