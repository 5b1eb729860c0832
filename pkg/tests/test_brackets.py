import itertools
import random

import pytest

from rpqsuper.brackets import (
    BracketError,
    bracket_with_distinguished,
    check_fi_variants,
    check_gbi_gsbi,
    check_gsji,
    check_skew,
    eq5_expansion,
    eq6_expansions,
    koszul_sign,
    levi_civita,
    n_bracket,
)
from rpqsuper.generators import GeneratorId, build
from rpqsuper.scalars import DeformationSpec
from rpqsuper.shiftalg import LANDAU, GradedOperator, random_operator

PQ = DeformationSpec("pq")
QC = DeformationSpec("q")


def ops_of(rng, spec, parities, nterms=2):
    return [random_operator(LANDAU, spec, p, rng, nterms) for p in parities]


def test_sign_examples():
    assert koszul_sign((0, 1), (1, 1)).sign == 1
    ps = koszul_sign((1, 0), (1, 1))
    assert (ps.epsilon, ps.sign) == (-1, 1)
    assert koszul_sign((1, 0), (0, 0)).sign == -1
    assert levi_civita((2, 0, 1)) == 1


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_sign_conventions_agree(n):
    for pars in itertools.product((0, 1), repeat=n):
        for perm in itertools.permutations(range(n)):
            assert koszul_sign(perm, pars, "explicit").sign == koszul_sign(perm, pars, "bubble").sign


def test_bosonic_self_bracket_vanishes(rng):
    x = random_operator(LANDAU, PQ, 0, rng)
    assert n_bracket([x, x], [1, 1], PQ).is_zero()


def test_even_bracket_needs_spec(rng):
    with pytest.raises(BracketError):
        n_bracket(ops_of(rng, PQ, (0, 0)))


def test_expansions_match_generic_bracket(spec, rng):
    for _ in range(3):
        ops = ops_of(rng, spec, [rng.randrange(2) for _ in range(3)])
        assert eq5_expansion(*ops) == n_bracket(ops)
        ops = ops_of(rng, spec, [rng.randrange(2) for _ in range(4)])
        w = [rng.randint(-2, 2) for _ in range(4)]
        first, second = eq6_expansions(ops, w, spec)
        assert first == second == n_bracket(ops, w, spec)


def test_distinguished_element_forms(spec, rng):
    for k in (1, 2, 3):
        ops = ops_of(rng, spec, [rng.randrange(2) for _ in range(k + 1)])
        w = [1] * (k + 1) if (k + 1) % 2 == 0 else None
        assert bracket_with_distinguished(ops[0], ops[1:], None, w, spec) == n_bracket(ops, w, spec)
    ops = ops_of(rng, spec, [1, 1, 0, 1])
    assert bracket_with_distinguished(ops[0], ops[1:3], ops[3], [0, 1, 2, 0], spec) == n_bracket(ops, [0, 1, 2, 0], spec)


def test_literal_distinguished_form_differs_somewhere():
    rng = random.Random(11)
    differs = False
    for _ in range(20):
        ops = ops_of(rng, PQ, [1, 1, 1, 1])
        w = [1, 1, 1, 1]
        lit = bracket_with_distinguished(ops[0], ops[1:], None, w, PQ, literal=True)
        differs |= lit != n_bracket(ops, w, PQ)
    assert differs


def test_skew_examples(spec, rng):
    ops = ops_of(rng, spec, (0, 0, 0))
    assert check_skew(ops, (2, 0, 1)).ok
    ops = ops_of(rng, spec, (1, 1, 0))
    assert check_skew(ops, (1, 0, 2)).ok
    for _ in range(4):
        ops = ops_of(rng, spec, [rng.randrange(2) for _ in range(4)])
        perm = list(range(4))
        rng.shuffle(perm)
        assert check_skew(ops, perm, [1, -1, 2, 0], spec).ok


def test_gsji_n2_uniform_weights(spec, rng):
    for pars in ((0, 0, 0), (1, 0, 0), (1, 1, 0), (1, 1, 1)):
        ops = ops_of(rng, spec, pars)
        assert check_gsji(ops, [2, 2, 2], spec, 2).ok


def test_gsji_fails_with_mode_dependent_prefactor():
    # the deformed prefactor of an inner bracket depends on which operands sit inside
    gids = [GeneratorId("WB", (1, 2)), GeneratorId("WF", (2, 1)), GeneratorId("WB", (-1, 3))]
    ops = [build(g, QC) for g in gids]
    assert check_gsji(ops, [1, 2, -1], QC, 2).status == "mismatch"
    assert check_gsji(ops, [1, 1, 1], QC, 2).ok


def test_gsji_worker_count_does_not_matter():
    rng = random.Random(5)
    ops = ops_of(rng, PQ, (1, 0, 1))
    a = check_gsji(ops, [1, 1, 1], PQ, 2, workers=1)
    b = check_gsji(ops, [1, 1, 1], PQ, 2, workers=2, blocks=3)
    assert a.status == b.status == "verified"


def test_gbi_and_gsbi(rng):
    for pars in ((0,) * 7, (0, 1, 1, 0, 1, 0, 1)):
        ops = ops_of(rng, PQ, pars, nterms=1)
        assert check_gbi_gsbi(ops[0], ops[1:], 3, PQ).ok
    ident = GradedOperator.identity(LANDAU, "pq")
    assert check_gbi_gsbi(ident, ops_of(rng, PQ, (0, 1, 0, 1, 0, 0), nterms=1), 3, PQ).ok


def test_gbi_arity_is_checked(rng):
    with pytest.raises(BracketError):
        B, *As = ops_of(rng, PQ, (0, 0, 0))
        check_gbi_gsbi(B, As, n=3)


def test_fi_detects_violation():
    ops = [build(GeneratorId("WB", (m, r)), QC) for m, r in [(0, 2), (-1, 2), (-1, 2), (1, 1), (2, 2)]]
    ops[3] = build(GeneratorId("WF", (2, 1)), QC)
    res = check_fi_variants("SuperFI3", ops)
    assert res.status == "mismatch" and res.witness
