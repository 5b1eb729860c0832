import pytest

from rpqsuper import scalars as S
from rpqsuper.generators import (
    GeneratorDomainError,
    GeneratorId,
    GeneratorSyntaxError,
    KINDS,
    build,
    decompose,
    format_combination,
    make_landau_scalars,
    parse_generator_expr,
    parse_generator_list,
)
from rpqsuper.scalars import DeformationSpec
from rpqsuper.shiftalg import graded_commutator, number_fn

PQ = DeformationSpec("pq")


def test_parse_examples():
    assert parse_generator_expr("WB(m=2,r=3)") == GeneratorId("WB", (2, 3))
    assert parse_generator_expr("Hbar(r=0,alpha=1)") == GeneratorId("Hbar", (0, 1))
    with pytest.raises(GeneratorDomainError, match="m\\+r ≥ 1"):
        parse_generator_expr("WB(m=0,r=0)")
    with pytest.raises(GeneratorSyntaxError, match="position"):
        parse_generator_expr("WB(1,")
    assert len(parse_generator_list("WB(1,2), WF(0,1),b")) == 3


@pytest.mark.parametrize("text", ["WB(1,2)", "WFbar(-1,3)", "L(-2,0)", "H(1,2)", "bdag", "Lperp"])
def test_round_trip(text):
    g = parse_generator_expr(text)
    assert parse_generator_expr(str(g)) == g


def test_w_actions():
    assert decompose(build(GeneratorId("WB", (0, 2)), PQ), PQ) == [(S.ONE, GeneratorId("WB", (0, 2)))]
    assert build(GeneratorId("WF", (1, 1)), PQ).parity == 1
    assert build(GeneratorId("H", (0, 1)), PQ).parity == 1


def test_virasoro_actions():
    L0 = build(GeneratorId("L", (2, 0)), PQ)
    assert L0.cells[(0, 0)][(2,)] == S.lambda_power(-0.5)
    L1 = build(GeneratorId("L", (2, 1)), PQ)
    assert L1.cells[(0, 0)][(2,)] == -S.lambda_power(0.5) * number_fn(PQ, 0)


def test_landau_grading():
    lperp, ham = make_landau_scalars(PQ)
    bd = build(GeneratorId("bdag"), PQ)
    assert graded_commutator(lperp, bd) == bd
    for kind in ("WB", "WBbar", "WF", "WFbar"):
        w = build(GeneratorId(kind, (1, 2)), PQ)
        assert graded_commutator(ham, w).is_zero()


@pytest.mark.parametrize("kind", [k for k in KINDS if k.startswith("W")])
def test_decompose_round_trip(kind, spec):
    ops = [(S.scalar(2), GeneratorId(kind, (1, 2))), (S.P if spec.deformed else S.scalar(3), GeneratorId(kind, (1, 3)))]
    total = None
    for c, g in ops:
        x = build(g, spec).scale(c)
        total = x if total is None else total + x
    back = decompose(total, spec)
    assert sorted(back, key=lambda t: t[1].args) == ops


def test_format_combination():
    assert format_combination([(S.ONE, GeneratorId("WB", (3, 2)))]) == "1 * WB(3,2)"
    assert format_combination([]) == "0"
    assert format_combination(None).startswith("<")
