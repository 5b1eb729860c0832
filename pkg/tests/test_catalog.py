import collections

import pytest

from rpqsuper import catalog as C
from rpqsuper import scalars as S
from rpqsuper.scalars import DeformationSpec, ONE, scalar

CL = DeformationSpec("classical")
QC = DeformationSpec("q")
PQ = DeformationSpec("pq")


def statuses(family, spec, options=C.Options(), grid=None):
    return collections.Counter(C.compare(r, spec, options).status for r in C.default_grid(family, grid))


def test_relation_id_round_trip():
    rid = C.RelationId.make("W2_COMM", pair="WB/WF", m1=1, r1=2, m2=0, r2=1)
    assert str(rid) == "W2_COMM[pair=WB/WF,m1=1,r1=2,m2=0,r2=1]"
    assert C.parse_relation_id(str(rid)) == rid
    rid = C.RelationId.make("SUB2N", n=2, m=[0, 1, 2, 3], last="B")
    assert C.parse_relation_id(str(rid)) == rid
    with pytest.raises(C.CatalogError):
        C.parse_relation_id("SHOV1[m=0,s=1]")
    with pytest.raises(C.CatalogError):
        C.parse_relation_id("NOPE[x=1]")


def test_structure_constant_examples():
    assert C.structure_f(PQ, 1, 2, 1, 2) == []
    f = C.structure_f(CL, 1, 2, 2, 2)
    assert f == [(1, scalar(1))]


def test_structure_constant_antisymmetry(spec):
    for m1, r1, m2, r2 in [(0, 1, 1, 2), (2, 3, -1, 2), (1, 2, 0, 3)]:
        a = dict(C.structure_f(spec, m1, r1, m2, r2))
        b = dict(C.structure_f(spec, m2, r2, m1, r1))
        assert set(a) == set(b)
        assert all(a[k] == -b[k] for k in a)


def test_vandermonde_and_normalizer():
    assert C.vandermonde(CL, (0, 1, 1)).is_zero()
    assert C.vandermonde(CL, (0, 1, 2, 3)) == scalar(12)
    assert C.vandermonde(PQ, (0, 1)) == ONE
    assert C.normalizer_Q(CL, 2) == scalar(2)
    q2 = C.normalizer_Q(QC, 2)
    assert S.SamplePoint(q=1).evaluate(q2) == 2


def test_sub2n_closed_form_example():
    rid = C.RelationId.make("SUB2N", n=2, m=(0, 1, 2, 3), last="B")
    rhs, _ = C.expected_rhs(rid, CL)
    assert rhs.text() == "12 * WB(6,3)"
    assert C.compare(rid, CL).ok


def test_named_examples():
    assert C.compare(C.RelationId.make("NULL3", kind="WB", r=2), PQ).ok
    rid = C.RelationId.make("VW", variant="22B", m1=1, m2=2)
    assert C.expected_rhs(rid, CL)[0].text() == "1 * WB(3,2)"
    assert C.compare(rid, CL).ok
    assert C.compare(C.RelationId.make("SHOV1", m=1, s=0, n=-1, r=0), PQ).ok


def test_lperp_paper_form_with_plain_counters():
    rid = C.RelationId.make("LPERP", kind="WB", m=2, r=1)
    assert C.compare(rid, PQ).ok
    res = C.compare(rid, PQ, C.Options(oscillator="plain", form="paper"))
    assert res.status == "mismatch"
    # witness: the bracket carries m, the closed form [m]
    assert res.witness["lhs"] != res.witness["rhs"]


@pytest.mark.parametrize("family", ["W2_COMM", "VW", "WITT3", "NULL3", "SUB3", "LPERP", "TRIPLE_LH", "NALG", "EX_SUB4"])
def test_classical_families_verify(family):
    c = statuses(family, CL)
    assert set(c) == {"verified"}, c


@pytest.mark.parametrize("family", ["SHOV1", "SHOV5", "SHOV8", "LIM1", "LIM5", "ALG3_1", "ALG3_5"])
def test_classical_virasoro_families_verify(family):
    grid = {"m": (-1, 1), "s": (0, 2)}
    assert set(statuses(family, CL, grid=grid)) == {"verified"}


def test_unrepaired_bound_flips_w2comm():
    literal = C.Options(repairs=C.Repairs(f_bound=False))
    c = statuses("W2_COMM", CL, literal)
    assert c["mismatch"] > 0 and c["verified"] > 0


def test_alg3_sign_repair_is_forced():
    literal = C.Options(repairs=C.Repairs(alg3_sign=False))
    rid = C.RelationId.make("ALG3_1", m=-1, s=0, n=-1, r=1, k=0, h=0)
    assert C.compare(rid, CL).ok
    assert C.compare(rid, CL, literal).status == "mismatch"


def test_sub3_vanishing_variants_are_exact_when_deformed():
    for spec in (QC, PQ):
        for rid in C.default_grid("SUB3"):
            if rid.get("variant") in ("BFF", "FFF"):
                assert C.compare(rid, spec).ok


def test_abpq_zero_mode_sum_is_skipped():
    rid = C.RelationId.make("NALG", n=2, m=(0, 0), r=(2, 1), last="B")
    assert C.compare(rid, DeformationSpec("abpq")).status == "skipped"


def test_series_backend_is_conditional():
    spec = DeformationSpec("series", (((1, 0), "1"), ((0, 1), "-1")))
    res = C.compare(C.RelationId.make("VW", variant="22B", m1=1, m2=2), spec)
    assert res.status in ("verified", "mismatch")
    res = C.compare(C.RelationId.make("W2_COMM", pair="WB/WB", m1=1, r1=2, m2=0, r2=2), spec)
    assert res.status == "conditional"


def test_out_of_domain_operand_is_skipped():
    rid = C.RelationId.make("VW", variant="22B", m1=-2, m2=0)
    assert C.compare(rid, CL).status == "skipped"


def test_nalg_trace_is_emitted():
    rid = C.RelationId.make("NALG", n=3, m=(0, 1, 1), r=(2, 1, 2), last="B")
    assert "lbar" in C.compare(rid, CL).trace


def test_w3_fi_classical_and_deformed():
    from rpqsuper.brackets import check_fi_variants

    gens = [C.FormalCombo.gen(m, s) + 2 * C.FormalCombo.gen(m + 1, s + 1) for m, s in [(0, 1), (1, 2), (-1, 0), (2, 1), (0, 2)]]
    assert check_fi_variants("FI", gens, br3=C.w3_bracket(CL)).ok
    assert check_fi_variants("FI", gens, br3=C.w3_bracket(QC)).status == "mismatch"


def test_every_family_has_a_grid():
    for fam in C.FAMILIES:
        assert C.default_grid(fam)
