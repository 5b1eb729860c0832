from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from rpqsuper import scalars as S
from rpqsuper.scalars import DeformationSpec, P, Q, ONE, SamplePoint, scalar

PQ = DeformationSpec("pq")
QC = DeformationSpec("q")
CL = DeformationSpec("classical")


def test_canonical_quotients():
    assert (P - Q) / (P - Q) == ONE
    assert (P**2 - Q**2) / (P - Q) == P + Q
    half = S.p_power(Fraction(1, 2))
    assert half * half == P


def test_deformed_numbers():
    assert S.deformed_number(QC, 3) == ONE + Q + Q**2
    assert S.deformed_number(PQ, -1) == -(P * Q).inverse()
    for spec in (PQ, QC, CL, DeformationSpec("abpq")):
        assert S.deformed_number(spec, 0).is_zero()
    assert S.deformed_number(CL, Fraction(5, 2)) == scalar(Fraction(5, 2))


def test_factorials_and_binomials():
    assert S.deformed_factorial(PQ, 0) == ONE
    assert S.deformed_factorial(PQ, 2) == P + Q
    assert S.deformed_factorial(CL, 4) == scalar(24)
    assert S.deformed_binomial(PQ, 5, 0) == ONE
    assert S.deformed_binomial(PQ, 2, 1) == P + Q
    assert S.deformed_binomial(QC, 4, 2) == (ONE + Q**2) * (ONE + Q + Q**2)
    assert S.binomial_or_zero(PQ, 2, 3).is_zero()
    assert S.binomial_or_zero(PQ, -1, 0).is_zero()


def test_falling_factorial_vanishes_past_the_top():
    assert S.falling_factorial(PQ, 2, 3).is_zero()
    assert S.falling_factorial(PQ, 5, 0) == ONE
    assert S.falling_factorial(CL, 4, 2) == scalar(12)
    # negative arguments keep every factor
    assert S.falling_factorial(CL, -1, 2) == scalar(2)


def test_prefactor_ratio():
    for M in (-2, 0, 3):
        assert S.prefactor_ratio(CL, M) == scalar(2)
    assert S.prefactor_ratio(PQ, 1) == P.inverse() + Q.inverse()
    assert S.prefactor_ratio(PQ, 0) == scalar(2)
    with pytest.raises(S.ScalarDivisionError):
        S.prefactor_ratio(DeformationSpec("abpq"), 0)


def test_sample_point_evaluation():
    sp = SamplePoint()
    assert sp.evaluate(P + Q) == sp.p + sp.q
    assert sp.evaluate(S.q_power(Fraction(1, 2))) == Fraction(3, 5)


def test_series_backend_matches_pq_table(tmp_path):
    # R(s,t) = s - t as a finite coefficient table
    path = tmp_path / "r.json"
    path.write_text('{"offset": 0, "coefficients": [[1, 0, "1"], [0, 1, "-1"]]}')
    spec = DeformationSpec.series_from_file(path)
    assert spec.needs_k
    assert S.deformed_number(spec, 0).is_zero()


def test_series_table_must_vanish_at_one():
    with pytest.raises(ValueError):
        DeformationSpec("series", (((1, 0), "1"),))


@settings(max_examples=40, deadline=None)
@given(st.integers(-4, 6), st.integers(-4, 6))
def test_field_laws(a, b):
    x = S.deformed_number(PQ, a) + P
    y = S.deformed_number(PQ, b) + Q
    assert x * y == y * x
    assert (x + y) - y == x
    assert (x * y) / y == x
