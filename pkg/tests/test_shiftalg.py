import random

from rpqsuper import scalars as S
from rpqsuper.generators import GeneratorId, build
from rpqsuper.scalars import DeformationSpec, SamplePoint
from rpqsuper.shiftalg import (
    LANDAU,
    basis_states,
    GradedOperator,
    compose,
    evaluate,
    first_difference,
    graded_commutator,
    lambda_leading,
    lambda_part,
    number_fn,
    random_operator,
    register_vars,
    shift,
    to_matrix,
    window_equal,
)

PQ = DeformationSpec("pq")
CL = DeformationSpec("classical")


def g(kind, *args, spec=PQ):
    return build(GeneratorId(kind, tuple(args)), spec)


def test_shift_and_evaluate():
    U, V, N = register_vars(1)
    assert shift(U, (0, 2)) == S.P**2 * U
    num = number_fn(PQ, 1)
    assert evaluate(num, (0, 2)) == S.P + S.Q


def test_oscillator_rules():
    b, bd = g("b"), g("bdag")
    assert compose(bd, b) == g("WB", 0, 2)
    comm = graded_commutator(b, bd)
    diag = GradedOperator.diagonal(LANDAU, lambda e: number_fn(PQ, 1, 1) - number_fn(PQ, 1), "pq")
    assert comm == diag
    assert compose(g("betadag"), g("betadag")).is_zero()
    assert graded_commutator(g("beta"), g("betadag")) == GradedOperator.identity(LANDAU, "pq")


def test_classical_commutator_is_identity():
    assert graded_commutator(g("b", spec=CL), g("bdag", spec=CL)) == GradedOperator.identity(LANDAU, "classical")


def test_zero_identities(rng):
    x = random_operator(LANDAU, PQ, 0, rng)
    assert (x - x).is_zero()
    assert x.scale(0).is_zero()
    assert compose(x, GradedOperator.identity(LANDAU, "pq")) == x
    assert graded_commutator(x, x).is_zero()
    assert first_difference(x, x) is None


def test_lambda_parts():
    lam = S.lambda_power(2)
    order, lead = lambda_part(lam * S.P + S.lambda_power(3))
    assert order == 2 and lead == S.P
    order, op = lambda_leading(g("L", 1, 0))
    assert order == -0.5


def test_matrix_oracle_raising():
    N = 3
    M, _ = to_matrix(g("bdag", spec=CL), N, SamplePoint())
    states = basis_states(LANDAU, N)
    index = {st: k for k, st in enumerate(states)}
    for (nu, e), k in index.items():
        up = ((nu[0], nu[1] + 1), e)
        for j in range(len(states)):
            want = 1 if up in index and j == index[up] else 0
            assert M[j, k] == want
    ident, win = to_matrix(GradedOperator.identity(LANDAU, "classical"), N, SamplePoint())
    assert all(ident[i, i] == 1 for i in range(ident.nrows())) and win


def test_matrix_homomorphism_in_window():
    rng = random.Random(3)
    for _ in range(5):
        a = random_operator(LANDAU, PQ, rng.randrange(2), rng)
        b = random_operator(LANDAU, PQ, rng.randrange(2), rng)
        r = a.reach() + b.reach()
        N = 2 * r + 2
        ma, win = to_matrix(a, N, PQ.sample, r)
        mb, _ = to_matrix(b, N, PQ.sample, r)
        mab, _ = to_matrix(compose(a, b), N, PQ.sample, r)
        assert window_equal(mab, ma * mb, win)
