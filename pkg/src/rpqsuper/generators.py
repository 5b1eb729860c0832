"""Named operators: oscillators, W-operators, Virasoro-type generators, L_perp, H.

Two spaces are used.  ZSPACE carries z^k theta^e (one bosonic index k, one
fermion theta) for the L, Lbar, H, Hbar generators; LANDAU carries the Fock
registers a, b, alpha, beta for the W-operators.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from . import scalars as S
from .scalars import ONE, ZERO, DeformationSpec, Scalar, scalar
from .shiftalg import (
    LANDAU,
    ZSPACE,
    GradedOperator,
    compose,
    evaluate,
    falling_factorial_fn,
    linear_combination,
    number_fn,
    popcount,
    register_vars,
)

OSCILLATORS = ("a", "adag", "b", "bdag", "alpha", "alphadag", "beta", "betadag")

# kind -> (parameter names, space)
KINDS = {
    "L": (("m", "s"), "z"),
    "Lbar": (("m", "s"), "z"),
    "H": (("r", "alpha"), "z"),
    "Hbar": (("r", "alpha"), "z"),
    "WB": (("m", "r"), "landau"),
    "WBbar": (("m", "r"), "landau"),
    "WF": (("m", "r"), "landau"),
    "WFbar": (("m", "r"), "landau"),
    "Lperp": ((), "landau"),
    "Ham": ((), "landau"),
}
for _o in OSCILLATORS:
    KINDS[_o] = ((), "landau")

ODD_KINDS = {"H", "Hbar", "WF", "WFbar", "alpha", "alphadag", "beta", "betadag"}


class GeneratorSyntaxError(ValueError):
    def __init__(self, msg, text, pos):
        super().__init__(f"{msg} at position {pos} in {text!r}")
        self.pos = pos


class GeneratorDomainError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorId:
    kind: str
    args: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GeneratorDomainError(f"unknown generator {self.kind!r}")
        names = KINDS[self.kind][0]
        if len(self.args) != len(names):
            raise GeneratorDomainError(f"{self.kind} takes {len(names)} indices ({', '.join(names)})")
        validate(self)

    @property
    def parity(self) -> int:
        return 1 if self.kind in ODD_KINDS else 0

    @property
    def space(self):
        return ZSPACE if KINDS[self.kind][1] == "z" else LANDAU

    @property
    def mode(self) -> int:
        """The mode label used as bracket weight."""
        if self.kind in ("b", "a"):
            return -1
        if self.kind in ("bdag", "adag"):
            return 1
        return self.args[0] if self.args else 0

    def named(self) -> dict:
        return dict(zip(KINDS[self.kind][0], self.args))

    def __str__(self):
        if not self.args:
            return self.kind
        return f"{self.kind}({','.join(str(a) for a in self.args)})"


def validate(g: GeneratorId):
    k, a = g.kind, g.args
    if k in ("L", "Lbar") and a[1] < 0:
        raise GeneratorDomainError(f"{k}: s ≥ 0 required")
    if k in ("H", "Hbar") and a[1] < 0:
        raise GeneratorDomainError(f"{k}: alpha ≥ 0 required")
    if k.startswith("W"):
        m, r = a
        if m + r < 1:
            raise GeneratorDomainError(f"{k}: m+r ≥ 1 required")
        if r < 1:
            raise GeneratorDomainError(f"{k}: r ≥ 1 required")


# ---------------------------------------------------------------------------
# text grammar

_TOKEN = re.compile(r"\s*(?:(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<int>[+-]?\d+)|(?P<sym>[(),=]))")


def _tokens(text):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise GeneratorSyntaxError("unexpected character", text, pos)
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokens(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind
            raise GeneratorSyntaxError(f"expected {want!r}, found {tok[1] or 'end of input'!r}", self.text, tok[2])
        self.i += 1
        return tok

    def generator(self) -> GeneratorId:
        _, name, pos = self.take("name")
        if name not in KINDS:
            raise GeneratorSyntaxError(f"unknown generator {name!r}", self.text, pos)
        names = KINDS[name][0]
        values = {}
        if self.peek()[1] == "(":
            self.take(value="(")
            positional = 0
            while True:
                tok = self.peek()
                if tok[0] == "name":
                    self.take()
                    key = tok[1]
                    if key not in names:
                        raise GeneratorSyntaxError(f"{name} has no index {key!r}", self.text, tok[2])
                    self.take(value="=")
                    val = int(self.take("int")[1])
                else:
                    if positional >= len(names):
                        raise GeneratorSyntaxError(f"too many indices for {name}", self.text, tok[2])
                    key = names[positional]
                    val = int(self.take("int")[1])
                    positional += 1
                if key in values:
                    raise GeneratorSyntaxError(f"index {key!r} given twice", self.text, tok[2])
                values[key] = val
                if self.peek()[1] == ",":
                    self.take(value=",")
                    continue
                self.take(value=")")
                break
        missing = [n for n in names if n not in values]
        if missing:
            raise GeneratorSyntaxError(f"{name} missing index {missing[0]!r}", self.text, pos)
        return GeneratorId(name, tuple(values[n] for n in names))


def parse_generator_expr(text: str) -> GeneratorId:
    p = _Parser(text)
    g = p.generator()
    p.take("end")
    return g


def parse_generator_list(text: str) -> list[GeneratorId]:
    p = _Parser(text)
    out = [p.generator()]
    while p.peek()[1] == ",":
        p.take(value=",")
        out.append(p.generator())
    p.take("end")
    return out


# ---------------------------------------------------------------------------
# constructors


def _jw_sign(eps: int, k: int) -> int:
    return -1 if popcount(eps & ((1 << k) - 1)) % 2 else 1


def make_oscillator(register: str, kind: str, spec: DeformationSpec, sig=LANDAU, plain: bool = False) -> GradedOperator:
    """Raising or lowering operator on a named register."""
    if kind not in ("raise", "lower"):
        raise ValueError("kind must be 'raise' or 'lower'")
    tag = spec.label()
    if register in sig.bosons:
        j = sig.boson(register)
        off = tuple(1 if i == j else 0 for i in range(sig.B))
        if kind == "raise":
            coeff = ONE
        else:
            off = tuple(-x for x in off)
            coeff = number_fn(spec, j, plain=plain)
        return GradedOperator(sig, 0, {(e, e): {off: coeff} for e in range(sig.nstates)}, tag)
    if register in sig.fermions:
        k = sig.fermion(register)
        bit = 1 << k
        zero = (0,) * sig.B
        cells = {}
        for e in range(sig.nstates):
            occupied = bool(e & bit)
            if kind == "raise" and not occupied:
                cells[(e | bit, e)] = {zero: scalar(_jw_sign(e, k))}
            if kind == "lower" and occupied:
                cells[(e ^ bit, e)] = {zero: scalar(_jw_sign(e, k))}
        return GradedOperator(sig, 1, cells, tag)
    raise ValueError(f"unknown register {register!r}")


def _w_core(m: int, r: int, spec: DeformationSpec, plain: bool) -> GradedOperator:
    j = LANDAU.boson("b")
    coeff = falling_factorial_fn(spec, r - 1, j, plain)
    return GradedOperator(LANDAU, 0, {(e, e): {(0, m): coeff} for e in range(4)}, spec.label())


def make_w(kind: str, m: int, r: int, spec: DeformationSpec, plain: bool = False) -> GradedOperator:
    """b^dag^(m+r-1) b^(r-1), dressed with beta^dag beta, beta or beta^dag."""
    GeneratorId(kind, (m, r))
    core = _w_core(m, r, spec, plain)
    if kind == "WB":
        return core
    if kind == "WBbar":
        return compose(core, compose(make_oscillator("beta", "raise", spec), make_oscillator("beta", "lower", spec)))
    if kind == "WF":
        return compose(core, make_oscillator("beta", "lower", spec))
    if kind == "WFbar":
        return compose(core, make_oscillator("beta", "raise", spec))
    raise GeneratorDomainError(f"{kind} is not a W-operator")


def _lam(e) -> Scalar:
    return S.lambda_power(Fraction(e))


def z_normalization(kind: str, t: int) -> Scalar:
    """Scalar prefactor of the generator of depth t in front of A^t."""
    sign = -1 if t % 2 else 1
    if kind == "L":
        return sign * _lam(Fraction(2 * t - 1, 2))
    if kind == "Lbar":
        return sign * _lam(Fraction(2 * t + 3, 2))
    return -sign * _lam(Fraction(2 * t + 1, 2))


def make_virasoro(kind: str, i1: int, i2: int, spec: DeformationSpec, K: Scalar | None = None) -> GradedOperator:
    """L(m,s), Lbar(m,s), H(r,alpha), Hbar(r,alpha) acting on z^k theta^e."""
    GeneratorId(kind, (i1, i2))
    coeff = z_normalization(kind, i2) * falling_factorial_fn(spec, i2, 0)
    off = (i1,)
    tag = spec.label()
    if kind == "L":
        op = GradedOperator(ZSPACE, 0, {(0, 0): {off: coeff}, (1, 1): {off: coeff}}, tag)
    elif kind == "Lbar":
        op = GradedOperator(ZSPACE, 0, {(1, 1): {off: coeff}}, tag)
    elif kind == "H":
        op = GradedOperator(ZSPACE, 1, {(0, 1): {off: coeff}}, tag)
    elif kind == "Hbar":
        op = GradedOperator(ZSPACE, 1, {(1, 0): {off: coeff}}, tag)
    else:
        raise GeneratorDomainError(f"{kind} is not a Virasoro-type generator")
    if K is not None:
        op = op.left_diag(K)
    return op


def make_landau_scalars(spec: DeformationSpec) -> tuple[GradedOperator, GradedOperator]:
    """(L_perp, H) with undeformed occupation counters."""
    _, _, Na = register_vars(0)
    _, _, Nb = register_vars(1)
    half = scalar(Fraction(1, 2))

    def lperp(e):
        return Nb + half * ((e >> 1) & 1) - Na - half * (e & 1)

    def ham(e):
        return Na + (e & 1)

    tag = spec.label()
    return GradedOperator.diagonal(LANDAU, lperp, tag), GradedOperator.diagonal(LANDAU, ham, tag)


def build(g: GeneratorId, spec: DeformationSpec, plain: bool = False) -> GradedOperator:
    if g.kind in ("L", "Lbar", "H", "Hbar"):
        return make_virasoro(g.kind, *g.args, spec)
    if g.kind.startswith("W"):
        return make_w(g.kind, *g.args, spec, plain=plain)
    if g.kind == "Lperp":
        return make_landau_scalars(spec)[0]
    if g.kind == "Ham":
        return make_landau_scalars(spec)[1]
    reg = g.kind.replace("dag", "")
    return make_oscillator(reg, "raise" if g.kind.endswith("dag") else "lower", spec, plain=plain)


# ---------------------------------------------------------------------------
# decomposition into generator bases


def expand_falling(f: Scalar, spec: DeformationSpec, register: int, plain: bool = False, nregs: int = 2):
    """Coefficients c_t with f = sum_t c_t A^t(nu); None if f is outside that span."""
    if f.is_zero():
        return []
    degs = f.degrees()
    for j in range(S.MAX_REGISTERS):
        if j != register and (degs[S.U_index(j)] or degs[S.V_index(j)] or degs[S.N_index(j)]):
            return None
    vars_ = (S.U_index(register), S.V_index(register), S.N_index(register))
    T = max(f.num.total_degree(), f.den.total_degree(), 0)
    T = min(T, sum(degs[v] for v in vars_) * 2 + 1)
    nu0 = [0] * nregs
    coeffs = []
    for t in range(T + 1):
        nu = list(nu0)
        nu[register] = t
        val = evaluate(f, nu)
        for s, c in enumerate(coeffs):
            val = val - c * S.falling_factorial(spec, t, s) if not plain else val - c * _plain_ff(t, s)
        norm = S.deformed_factorial(spec, t) if not plain else scalar(_plain_ff(t, t))
        if norm.is_zero():
            return None
        coeffs.append(val / norm)
    while coeffs and coeffs[-1].is_zero():
        coeffs.pop()
    recon = ZERO
    for t, c in enumerate(coeffs):
        recon = recon + c * falling_factorial_fn(spec, t, register, plain)
    if recon != f:
        return None
    return coeffs


def _plain_ff(n: int, k: int) -> int:
    out = 1
    for j in range(k):
        out *= n - j
    return out


def decompose(op: GradedOperator, spec: DeformationSpec, plain: bool = False):
    """Express op as sum of coefficient * generator; None when it is not in the span."""
    if op.is_zero():
        return []
    if op.sig == LANDAU:
        return _decompose_w(op, spec, plain)
    if op.sig == ZSPACE:
        return _decompose_z(op, spec)
    return None


def _decompose_w(op, spec, plain):
    out = []
    offsets = sorted(op.offsets())
    if any(d[0] != 0 for d in offsets):
        return None

    def cell(o, i, d):
        return op.cells.get((o, i), {}).get(d, ZERO)

    for d in offsets:
        m = d[1]
        if op.parity == 0:
            parts = [("WB", cell(0, 0, d)), ("WBbar", cell(2, 2, d) - cell(0, 0, d))]
        else:
            parts = [("WF", cell(0, 2, d)), ("WFbar", cell(2, 0, d))]
        for kind, f in parts:
            cs = expand_falling(f, spec, 1, plain)
            if cs is None:
                return None
            for t, c in enumerate(cs):
                if c.is_zero():
                    continue
                if m + t + 1 < 1:
                    return None
                out.append((c, GeneratorId(kind, (m, t + 1))))
    if not _recon_equal(op, out, spec, plain):
        return None
    return out


def _decompose_z(op, spec):
    out = []

    def cell(o, i, d):
        return op.cells.get((o, i), {}).get(d, ZERO)

    for d in sorted(op.offsets()):
        m = d[0]
        if op.parity == 0:
            parts = [("L", cell(0, 0, d)), ("Lbar", cell(1, 1, d) - cell(0, 0, d))]
        else:
            parts = [("H", cell(0, 1, d)), ("Hbar", cell(1, 0, d))]
        for kind, f in parts:
            cs = expand_falling(f, spec, 0, nregs=1)
            if cs is None:
                return None
            for t, c in enumerate(cs):
                if not c.is_zero():
                    out.append((c / z_normalization(kind, t), GeneratorId(kind, (m, t))))
    if not _recon_equal(op, out, spec, False):
        return None
    return out


def _recon_equal(op, terms, spec, plain):
    recon = linear_combination(((c, build(g, spec, plain)) for c, g in terms), op.sig, op.parity)
    return recon == op


def format_combination(terms) -> str:
    if terms is None:
        return "<not in the generator span>"
    if not terms:
        return "0"
    parts = []
    for c, g in terms:
        text = S.to_text(c)
        if any(ch in text for ch in "+-/ ") and not re.fullmatch(r"-?\d+(/\d+)?", text):
            text = f"({text})"
        parts.append(f"{text} * {g}")
    return " + ".join(parts)
