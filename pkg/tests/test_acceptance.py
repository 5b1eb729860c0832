"""Acceptance criteria, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` (the lines are printed even without -s).
"""
import json
import time
from importlib import resources
from pathlib import Path

import jsonschema
import pytest

from rpqsuper import catalog as C
from rpqsuper.cli import main
from rpqsuper.harness import SuiteConfig, compare_snapshot, load_snapshot, run_suite
from rpqsuper.scalars import DeformationSpec

BACKENDS = ("classical", "q", "pq")
SNAP = Path(__file__).parent / "snapshots"


@pytest.fixture
def line(request, capsys):
    """Collects notes for a criterion and prints its verdict when the test ends."""
    notes = []
    t0 = time.perf_counter()
    yield notes
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    label = request.node.function.__doc__.strip()
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'}  {label}  [{time.perf_counter() - t0:.1f}s] {'; '.join(notes)}")


def run(suite, deformation, **kw):
    return run_suite(SuiteConfig(suite=suite, deformation=DeformationSpec(deformation), **kw))


def all_verified(report):
    return all(c.status == "verified" for c in report.checks)


def test_criterion_1_associativity_identities(line):
    """1 GSJI n=2, skew n=3/4, GBI/GSBI n=3 exact on all backends within 2 minutes"""
    t0 = time.perf_counter()
    for b in BACKENDS:
        for suite, n in (("gsji", 2), ("skew", None), ("gbi", 3)):
            r = run(suite, b, n=n, jobs=4)
            line.append(f"{b}/{suite} {r.summary['verified']}/{r.summary['total']}")
            assert r.summary["total"] == {"gsji": 50, "skew": 40, "gbi": 30}[suite]
            assert all_verified(r)
    elapsed = time.perf_counter() - t0
    assert elapsed <= 120, elapsed


def test_criterion_2_gsji_n4(line):
    """2 GSJI n=4, seven mixed-parity W generators, 5040 outer permutations, identical serial report"""
    t0 = time.perf_counter()
    par = run("gsji", "pq", n=4, seed=7, jobs=4)
    t_par = time.perf_counter() - t0
    ser = run("gsji", "pq", n=4, seed=7, jobs=1)
    (check,) = par.checks
    ops = check.params["operands"]
    line.append(f"{' '.join(ops)}; parallel {t_par:.0f}s")
    assert check.status == "verified"
    assert len(set(ops)) == 7
    assert {g.startswith("WF") for g in ops} == {True, False}
    assert par.hash == ser.hash
    assert t_par <= 600


def test_criterion_3_bracket_forms(line):
    """3 expansion and distinguished-element forms agree with the generic bracket"""
    for b in BACKENDS:
        r = run("forms", b)
        line.append(f"{b} {r.summary['verified']}/{r.summary['total']}")
        assert r.summary["total"] == 100 and all_verified(r)


def test_criterion_4_classical_reproduction(line):
    """4 classical backend reproduces VW, Witt-3, null 3-commutators, W commutators, sub-2n"""
    for suite in ("vw", "witt3", "null3", "w2comm", "sub2n", "exsub", "shov"):
        r = run(suite, "classical", jobs=4)
        line.append(f"{suite} {r.summary['verified']}/{r.summary['total']}")
        assert all_verified(r)
    vw = [rid for rid in C.default_grid("VW")]
    assert {rid.get("m1") for rid in vw} >= set(range(-1, 4))
    rid = C.RelationId.make("EX_SUB4", m=(0, 1, 2, 3), last="B")
    assert C.compare(rid, DeformationSpec("classical")).ok


def test_criterion_5_deformed_backends(line):
    """5 q/pq: vanishing sub-3 brackets and gradings exact; SHOV statuses pinned and worker-independent"""
    for b in ("q", "pq"):
        sub3 = run("sub3", b)
        vanishing = [c for c in sub3.checks if c.params["variant"] in ("BFF", "FFF")]
        assert vanishing and all(c.status == "verified" for c in vanishing)
        for suite in ("lperp", "triple"):
            assert all_verified(run(suite, b))
        one = run("shov", b, jobs=1)
        four = run("shov", b, jobs=4)
        assert one.hash == four.hash
        assert all(c.status == "verified" or (c.status == "mismatch" and c.witness) for c in one.checks)
        assert compare_snapshot(one, load_snapshot(SNAP / f"{b}_shov.json")) == []
        line.append(f"{b} shov {one.summary['verified']} verified / {one.summary['mismatch']} witnessed")


def test_criterion_6_oracle_coherence(line):
    """6 symbolic equality implies safe-window matrix equality on 100 seeded pairs"""
    for b in BACKENDS:
        r = run("oracle", b)
        line.append(f"{b} {r.summary['verified']}/{r.summary['total']}")
        assert r.summary["total"] == 100 and all_verified(r)


def test_criterion_7_negative_controls(line):
    """7 super FI and super FI-2n detected as violated on the stated instances"""
    for b in BACKENDS:
        r = run("fi", b, count=1)
        controls = [c for c in r.checks if c.extra.get("expected") == "violated"]
        kinds = sorted({c.id for c in controls})
        line.append(f"{b} {len(controls)} controls {kinds}")
        assert len(controls) >= 3
        assert all(c.status == "mismatch" and c.witness for c in controls)


def test_criterion_8_cli_contract(line, capsys):
    """8 the three CLI examples give the stated exit codes and schema-valid JSON"""
    schema = json.loads(resources.files("rpqsuper").joinpath("report_schema.json").read_text())
    code = main(["check", "--deformation", "pq", "--suite", "gsji", "--n", "4", "--seed", "7",
                 "--format", "json", "--jobs", "4"])
    out = capsys.readouterr().out
    jsonschema.validate(json.loads(out), schema)
    assert code == 0
    code = main(["bracket", "--deformation", "classical", "--ops", "WB(1,2),WB(2,2)"])
    out = capsys.readouterr().out
    assert code == 0 and out.strip() == "1 * WB(3,2)"
    code = main(["check", "--suite", "w2comm", "--deformation", "classical", "--paper-literal", "--format", "json"])
    out = capsys.readouterr().out
    jsonschema.validate(json.loads(out), schema)
    assert code == 2
    line.append("exit codes 0, 0, 2")
