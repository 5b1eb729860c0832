"""Graded n-brackets and the identity checkers built on them."""

from __future__ import annotations

import itertools
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .results import CheckResult
from .scalars import ONE, DeformationSpec, Scalar, prefactor_ratio, scalar
from .shiftalg import (
    GradedOperator,
    compose,
    first_difference,
    graded_commutator,
    linear_combination,
)


class BracketError(ValueError):
    pass


# ---------------------------------------------------------------------------
# signs


def levi_civita(perm: Sequence[int]) -> int:
    """Sign of a permutation given as a sequence of distinct sortable labels."""
    if len(set(perm)) != len(perm):
        return 0
    sign = 1
    seen = list(perm)
    for i in range(len(seen)):
        for j in range(i + 1, len(seen)):
            if seen[j] < seen[i]:
                sign = -sign
    return sign


def _check_perm(perm, n):
    if sorted(perm) != list(range(n)):
        raise BracketError(f"{list(perm)} is not a permutation of 0..{n - 1}")


def koszul_exponent(perm: Sequence[int], parities: Sequence[int], literal: bool = False) -> int:
    """sum_k |A_{i_k}| sum_{l>k, i_l<i_k} |A_{i_l}|  (mod 2).

    ``literal`` uses |A_k| for the outer factor instead of |A_{i_k}|.
    """
    n = len(perm)
    total = 0
    for k in range(n - 1):
        outer = parities[k] if literal else parities[perm[k]]
        if not outer:
            continue
        inner = sum(parities[perm[l]] for l in range(k + 1, n) if perm[l] < perm[k])
        total += outer * inner
    return total % 2


def bubble_sign(perm: Sequence[int], parities: Sequence[int]) -> tuple[int, int]:
    """(epsilon, koszul) accumulated one adjacent swap at a time."""
    seq = list(perm)
    eps, kos = 1, 1
    changed = True
    while changed:
        changed = False
        for i in range(len(seq) - 1):
            if seq[i] > seq[i + 1]:
                a, b = seq[i], seq[i + 1]
                eps = -eps
                if parities[a] and parities[b]:
                    kos = -kos
                seq[i], seq[i + 1] = b, a
                changed = True
    return eps, kos


@dataclass(frozen=True)
class PermutationSign:
    perm: tuple
    epsilon: int
    koszul: int

    @property
    def sign(self) -> int:
        return self.epsilon * self.koszul


def koszul_sign(perm: Sequence[int], parities: Sequence[int], convention: str = "explicit") -> PermutationSign:
    """Sign attached to A_{i_1}...A_{i_n} in the graded antisymmetrizer.

    convention: "explicit" (closed exponent), "literal" (exponent with |A_k|)
    or "bubble" (adjacent transpositions).
    """
    perm = tuple(perm)
    _check_perm(perm, len(parities))
    if convention == "bubble":
        eps, kos = bubble_sign(perm, parities)
        return PermutationSign(perm, eps, kos)
    if convention not in ("explicit", "literal"):
        raise ValueError(f"unknown sign convention {convention!r}")
    e = koszul_exponent(perm, parities, literal=convention == "literal")
    return PermutationSign(perm, levi_civita(perm), -1 if e else 1)


_sign_tables: dict = {}


def signed_permutations(parities: tuple) -> list:
    """[(perm, sign)] for all permutations, cached per parity pattern."""
    hit = _sign_tables.get(parities)
    if hit is None:
        hit = []
        for perm in itertools.permutations(range(len(parities))):
            ps = koszul_sign(perm, parities)
            hit.append((perm, ps.sign))
        _sign_tables[parities] = hit
    return hit


# ---------------------------------------------------------------------------
# memoized products


class Memo:
    """Per-process product and bracket caches keyed by operator content."""

    def __init__(self, limit: int = 400_000):
        self.products: dict = {}
        self.brackets: dict = {}
        self.limit = limit
        self.hits = 0
        self.misses = 0

    def clear(self):
        self.products.clear()
        self.brackets.clear()

    def product(self, ops: Sequence[GradedOperator]) -> GradedOperator:
        if len(ops) == 1:
            return ops[0]
        key = tuple(_mkey(o) for o in ops)
        hit = self.products.get(key)
        if hit is not None:
            self.hits += 1
            return hit
        self.misses += 1
        out = compose(self.product(ops[:-1]), ops[-1])
        if len(self.products) > self.limit:
            self.products.clear()
        self.products[key] = out
        return out


MEMO = Memo()


def _mkey(o: GradedOperator):
    return (o.backend or "", o.parity, o.key())


def product(ops: Sequence[GradedOperator], memo: Memo | None = MEMO) -> GradedOperator:
    if memo is None:
        out = ops[0]
        for o in ops[1:]:
            out = compose(out, o)
        return out
    return memo.product(list(ops))


# ---------------------------------------------------------------------------
# the n-bracket


def bracket_prefactor(spec: DeformationSpec, n: int, weights) -> Scalar:
    """(1/2^alpha) ([-2M]/[-M])^alpha with alpha = 1 for even n."""
    if n % 2:
        return ONE
    if weights is None:
        raise BracketError(f"an even bracket (n={n}) needs weights")
    if len(weights) != n:
        raise BracketError(f"expected {n} weights, got {len(weights)}")
    M = sum(Fraction(w) for w in weights)
    return scalar(Fraction(1, 2)) * prefactor_ratio(spec, M)


def antisymmetrizer(ops: Sequence[GradedOperator], memo: Memo | None = MEMO) -> GradedOperator:
    """sum over permutations of epsilon * koszul * ordered product (no prefactor)."""
    if not ops:
        raise BracketError("empty bracket")
    parities = tuple(o.parity for o in ops)
    pairs = []
    for perm, sign in signed_permutations(parities):
        pairs.append((sign, product([ops[i] for i in perm], memo)))
    return linear_combination(pairs, ops[0].sig, sum(parities) % 2)


def n_bracket(
    ops: Sequence[GradedOperator],
    weights=None,
    spec: DeformationSpec | None = None,
    memo: Memo | None = MEMO,
    canonical: bool = False,
) -> GradedOperator:
    """Graded n-bracket with the deformed prefactor for even n.

    With ``canonical`` the operands are first sorted by content key and the
    result is taken from the bracket cache up to the Koszul sign of the sort.
    """
    n = len(ops)
    sig = ops[0].sig
    for o in ops:
        if o.sig != sig:
            raise BracketError("operands live on different spaces")
    pref = bracket_prefactor(spec or DeformationSpec("classical"), n, weights) if n % 2 == 0 else ONE
    if n % 2 == 0 and spec is None:
        raise BracketError("even brackets need a deformation spec for the prefactor")
    if not canonical or memo is None:
        return antisymmetrizer(ops, memo).scale(pref)
    keys = [_mkey(o) for o in ops]
    order = sorted(range(n), key=lambda i: keys[i])
    sorted_ops = [ops[i] for i in order]
    sign = koszul_sign(order, [o.parity for o in ops]).sign
    ck = tuple(keys[i] for i in order)
    base = memo.brackets.get(ck)
    if base is None:
        base = antisymmetrizer(sorted_ops, memo)
        memo.brackets[ck] = base
    return base.scale(pref * sign)


def commutator_bracket(x, y, spec, weights) -> GradedOperator:
    """n=2 bracket written as prefactor times the graded commutator."""
    return graded_commutator(x, y).scale(bracket_prefactor(spec, 2, weights))


def eq5_expansion(a1, a2, a3) -> GradedOperator:
    c = graded_commutator
    s12 = -1 if a1.parity * a2.parity else 1
    s3 = -1 if a3.parity * (a1.parity + a2.parity) % 2 else 1
    return compose(a1, c(a2, a3)) - compose(a2, c(a1, a3)).scale(s12) + compose(a3, c(a1, a2)).scale(s3)


def cyclic_three_bracket(u, v, w) -> GradedOperator:
    """[U,V]W + (-1)^{|U|(|V|+|W|)} [V,W]U + (-1)^{|W|(|U|+|V|)} [W,U]V."""
    c = graded_commutator
    su = -1 if u.parity * (v.parity + w.parity) % 2 else 1
    sw = -1 if w.parity * (u.parity + v.parity) % 2 else 1
    return compose(c(u, v), w) + compose(c(v, w), u).scale(su) + compose(c(w, u), v).scale(sw)


def eq6_expansions(ops, weights, spec) -> tuple[GradedOperator, GradedOperator]:
    """The two n=4 forms: A_i times 3-brackets, and products of commutators."""
    a1, a2, a3, a4 = ops
    p1, p2, p3, p4 = (o.parity for o in ops)
    pref = bracket_prefactor(spec, 4, weights)
    three = lambda *xs: antisymmetrizer(xs)

    def sg(e):
        return -1 if e % 2 else 1

    first = (
        compose(a1, three(a2, a3, a4))
        - compose(a2, three(a1, a3, a4)).scale(sg(p1 * p2))
        + compose(a3, three(a1, a2, a4)).scale(sg(p3 * (p1 + p2)))
        - compose(a4, three(a1, a2, a3)).scale(sg(p4 * (p1 + p2 + p3)))
    )
    c = graded_commutator
    second = linear_combination(
        [
            (1, compose(c(a1, a2), c(a3, a4))),
            (sg((p4 + p3) * (p2 + p1)), compose(c(a3, a4), c(a1, a2))),
            (-sg(p3 * p2), compose(c(a1, a3), c(a2, a4))),
            (-sg(p4 * (p1 + p3) + p2 * p1), compose(c(a2, a4), c(a1, a3))),
            (sg(p4 * (p2 + p3)), compose(c(a1, a4), c(a2, a3))),
            (sg(p1 * (p2 + p3)), compose(c(a2, a3), c(a1, a4))),
        ],
        a1.sig,
        (p1 + p2 + p3 + p4) % 2,
    )
    return first.scale(pref), second.scale(pref)


def bracket_with_distinguished(
    B: GradedOperator,
    As: Sequence[GradedOperator],
    Z: GradedOperator | None = None,
    weights=None,
    spec: DeformationSpec | None = None,
    literal: bool = False,
) -> GradedOperator:
    """[B, A_1..A_k] or [B, A_1..A_k, Z] expanded by insertion positions of B (and Z).

    ``literal`` starts the Koszul sum of the A-permutation at its second
    position, as printed; the default starts at the first.
    """
    k = len(As)
    order = k + 1 if Z is None else k + 2
    pref = bracket_prefactor(spec, order, weights) if order % 2 == 0 else ONE
    if order % 2 == 0 and spec is None:
        raise BracketError("even brackets need a deformation spec")
    ap = [a.parity for a in As]
    pairs = []
    for perm in itertools.permutations(range(k)):
        eps = levi_civita(perm)
        kos = _koszul_from(perm, ap, 1 if literal else 0)
        seq = [As[i] for i in perm]
        par = [ap[i] for i in perm]
        if Z is None:
            for j in range(k + 1):
                e = kos + B.parity * sum(par[:j])
                sign = (-1) ** j * eps * (-1) ** e
                pairs.append((sign, product(seq[:j] + [B] + seq[j:])))
            continue
        for j in range(k + 1):
            for kk in range(k - j + 1):
                # B after kk of the A's, Z before the last j of them
                e2 = kos + B.parity * sum(par[:kk]) + Z.parity * sum(par[k - j:])
                s2 = (-1) ** (j + kk) * eps * (-1) ** e2
                pairs.append((s2, product(seq[:kk] + [B] + seq[kk:k - j] + [Z] + seq[k - j:])))
                e3 = kos + B.parity * sum(par[:k - j]) + Z.parity * (B.parity + sum(par[kk:]))
                s3 = -((-1) ** (j + kk)) * eps * (-1) ** e3
                pairs.append((s3, product(seq[:kk] + [Z] + seq[kk:k - j] + [B] + seq[k - j:])))
    par_total = (B.parity + sum(ap) + (Z.parity if Z is not None else 0)) % 2
    return linear_combination(pairs, B.sig, par_total).scale(pref)


def _koszul_from(perm, parities, start):
    total = 0
    n = len(perm)
    for k in range(start, n - 1):
        pk = parities[perm[k]]
        if pk:
            total += sum(parities[perm[l]] for l in range(k + 1, n) if perm[l] < perm[k])
    return total % 2


# ---------------------------------------------------------------------------
# identity checks


def _result(rid, params, value, t0, trace=None) -> CheckResult:
    zero = GradedOperator.zero(value.sig, value.parity)
    w = first_difference(value, zero)
    res = CheckResult(rid, params, "verified" if w is None else "mismatch", w, trace)
    res.millis = (time.perf_counter() - t0) * 1000
    return res


def check_skew(ops, perm, weights=None, spec=None, params=None) -> CheckResult:
    """[A_perm] == epsilon * koszul * [A] exactly."""
    t0 = time.perf_counter()
    n = len(ops)
    _check_perm(tuple(perm), n)
    ps = koszul_sign(perm, [o.parity for o in ops])
    pw = None if weights is None else [weights[i] for i in perm]
    lhs = n_bracket([ops[i] for i in perm], pw, spec)
    rhs = n_bracket(ops, weights, spec).scale(ps.sign)
    return _result("SKEW", params or {"n": n, "perm": list(perm)}, lhs - rhs, t0)


def _nested_sum(args):
    """Partial GSJI sum over a block of permutations (runs in workers too)."""
    ops, weights, spec, n, perms, canonical = args
    memo = MEMO
    parities = tuple(o.parity for o in ops)
    pairs = []
    for perm in perms:
        sign = koszul_sign(perm, parities).sign
        inner_ops = [ops[i] for i in perm[:n]]
        inner_w = [weights[i] for i in perm[:n]]
        inner = n_bracket(inner_ops, inner_w, spec, memo, canonical)
        if inner.is_zero():
            continue
        outer_ops = [inner] + [ops[i] for i in perm[n:]]
        outer_w = [sum(Fraction(w) for w in inner_w)] + [weights[i] for i in perm[n:]]
        pairs.append((sign, n_bracket(outer_ops, outer_w, spec, memo, canonical)))
    par = sum(parities) % 2
    return linear_combination(pairs, ops[0].sig, par)


def _blocks(seq, nblocks):
    size = max(1, -(-len(seq) // nblocks))
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def run_blocks(fn: Callable, args_list: list, workers: int = 1) -> list:
    """Map fn over blocks, in order; a process pool when workers > 1."""
    if workers <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args_list))


def check_gsji(ops, weights, spec, n=None, workers=1, canonical=True, params=None, blocks=None) -> CheckResult:
    """Epsilon/Koszul-weighted sum of [[A..A], A..A] over S_{2n-1} must vanish."""
    t0 = time.perf_counter()
    if n is None:
        n = (len(ops) + 1) // 2
    if n % 2:
        raise BracketError("the GSJI check needs even n; use check_gbi_gsbi for odd n")
    if len(ops) != 2 * n - 1:
        raise BracketError(f"GSJI for n={n} takes {2 * n - 1} operators, got {len(ops)}")
    perms = list(itertools.permutations(range(len(ops))))
    nb = blocks or max(1, workers) * 4
    args = [(list(ops), list(weights), spec, n, blk, canonical) for blk in _blocks(perms, nb)]
    parts = run_blocks(_nested_sum, args, workers)
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return _result("GSJI", params or {"n": n}, total, t0)


def _gb_side(args):
    B, As, spec, n, perms, side, canonical = args
    parities = tuple(a.parity for a in As)
    pairs = []
    for perm in perms:
        sign = koszul_sign(perm, parities).sign
        A = [As[i] for i in perm]
        if side == "lhs":
            x = n_bracket([B] + A[: n - 1], None, spec, MEMO, canonical)
            y = n_bracket(A[n - 1: 2 * n - 1], None, spec, MEMO, canonical)
            val = n_bracket([x, y] + A[2 * n - 1:], None, spec, MEMO, canonical)
        else:
            y = n_bracket(A[:n], None, spec, MEMO, canonical)
            x = n_bracket([B, y] + A[n: 2 * n - 2], None, spec, MEMO, canonical)
            val = n_bracket([x] + A[2 * n - 2:], None, spec, MEMO, canonical)
        pairs.append((sign, val))
    par = (B.parity + sum(parities)) % 2
    return linear_combination(pairs, B.sig, par)


def check_gbi_gsbi(B, As, n=3, spec=None, workers=1, canonical=True, params=None) -> CheckResult:
    """Odd-n Bremner identity (graded form) with 3n-3 operands besides B."""
    t0 = time.perf_counter()
    if n % 2 == 0:
        raise BracketError("GBI/GSBI needs odd n")
    if len(As) != 3 * n - 3:
        raise BracketError(f"GBI/GSBI for n={n} takes {3 * n - 3} operands besides B, got {len(As)}")
    perms = list(itertools.permutations(range(len(As))))
    blocks = _blocks(perms, max(1, workers) * 2)
    args = [(B, list(As), spec, n, blk, side, canonical) for side in ("lhs", "rhs") for blk in blocks]
    parts = run_blocks(_gb_side, args, workers)
    half = len(blocks)
    lhs = parts[0]
    for p in parts[1:half]:
        lhs = lhs + p
    rhs = parts[half]
    for p in parts[half + 1:]:
        rhs = rhs + p
    kind = "GBI" if all(a.parity == 0 for a in As) and B.parity == 0 else "GSBI"
    return _result(kind, params or {"n": n}, lhs - rhs, t0)


# ---------------------------------------------------------------------------
# fundamental-identity variants


def fi_residual(A, B, C, D, E, br3, parity=lambda x: x.parity):
    """[A,B,[C,D,E]] minus the three-term right-hand side for a 3-bracket br3."""
    pa, pb, pc, pd = parity(A), parity(B), parity(C), parity(D)
    s1 = -1 if (pa + pb) * pc % 2 else 1
    s2 = -1 if (pa + pb) * (pc + pd) % 2 else 1
    lhs = br3(A, B, br3(C, D, E))
    rhs = br3(br3(A, B, C), D, E) + s1 * br3(C, br3(A, B, D), E) + s2 * br3(C, D, br3(A, B, E))
    return lhs - rhs


def fi2n_residual(ops, weights, spec, N):
    """[A_1..A_{N-1}, [A_N..A_{2N-1}]] minus the sum of insertions, order-N brackets."""
    if len(ops) != 2 * N - 1:
        raise BracketError(f"the order-{N} identity takes {2 * N - 1} operands")
    par = [o.parity for o in ops]
    head, tail = ops[: N - 1], ops[N - 1:]
    hw, tw = weights[: N - 1], weights[N - 1:]

    def br(xs, ws):
        return n_bracket(xs, ws, spec)

    inner = br(tail, tw)
    lhs = br(head + [inner], hw + [sum(Fraction(w) for w in tw)])
    terms = []
    for i in range(N):
        moved = sum(par[N - 1: N - 1 + i])
        sign = -1 if moved * sum(par[: N - 1]) % 2 else 1
        nested = br(head + [tail[i]], hw + [tw[i]])
        args = tail[:i] + [nested] + tail[i + 1:]
        aw = tw[:i] + [sum(Fraction(w) for w in hw) + Fraction(tw[i])] + tw[i + 1:]
        terms.append((sign, br(args, aw)))
    return lhs - linear_combination(terms, ops[0].sig, lhs.parity)


def check_fi_variants(kind, ops, weights=None, spec=None, N=None, br3=None, params=None) -> CheckResult:
    """Evaluate FI, SuperFI3 or SuperFI2n; the outcome is reported, never assumed."""
    t0 = time.perf_counter()
    if kind in ("FI", "SuperFI3"):
        if len(ops) != 5:
            raise BracketError(f"{kind} takes 5 operands")
        if br3 is None:
            br3 = lambda x, y, z: n_bracket([x, y, z])
        res = fi_residual(*ops, br3=br3)
        if hasattr(res, "cells"):
            return _result(kind, params or {}, res, t0)
        w = res.first_nonzero()
        out = CheckResult(kind, params or {}, "verified" if w is None else "mismatch", w)
        out.millis = (time.perf_counter() - t0) * 1000
        return out
    if kind == "SuperFI2n":
        N = N or (len(ops) + 1) // 2
        res = fi2n_residual(list(ops), list(weights), spec, N)
        return _result(kind, params or {"N": N}, res, t0)
    raise BracketError(f"unknown FI variant {kind!r}")


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))
