from pathlib import Path

import pytest

from rpqsuper import catalog as C
from rpqsuper.harness import (
    ConfigError,
    Report,
    SuiteConfig,
    compare_snapshot,
    diff_reports,
    load_snapshot,
    parse_deformation,
    parse_grid,
    run_suite,
)
from rpqsuper.scalars import DeformationSpec, SamplePoint

SNAP = Path(__file__).parent / "snapshots"


def cfg(**kw):
    kw.setdefault("deformation", DeformationSpec("pq"))
    return SuiteConfig(**kw)


def test_parse_grid():
    assert parse_grid("m=-2..2,r=1..3") == (("m", -2, 2), ("r", 1, 3))
    assert parse_grid("") == ()
    with pytest.raises(ConfigError):
        parse_grid("m=1-2")


def test_parse_deformation():
    assert parse_deformation("q").kind == "q"
    with pytest.raises(ConfigError):
        parse_deformation("xyz")


@pytest.mark.parametrize("kw", [
    {"suite": "nope"}, {"jobs": 0}, {"count": 0}, {"suite": "gsji", "n": 3},
    {"suite": "gbi", "n": 4}, {"grid": (("zz", 0, 1),)}, {"grid": (("m", 2, 1),)},
    {"oscillator": "other"},
])
def test_bad_configs(kw):
    with pytest.raises(ConfigError):
        cfg(**kw)


def test_seeded_runs_are_deterministic():
    a = run_suite(cfg(suite="skew", seed=3, count=4))
    b = run_suite(cfg(suite="skew", seed=3, count=4))
    assert a.hash == b.hash
    assert diff_reports(a, b) == []
    c = run_suite(cfg(suite="skew", seed=4, count=4))
    assert c.hash != a.hash


def test_worker_count_does_not_change_the_report():
    a = run_suite(cfg(suite="vw", deformation=DeformationSpec("q"), jobs=1))
    b = run_suite(cfg(suite="vw", deformation=DeformationSpec("q"), jobs=2))
    assert a.hash == b.hash
    assert a.to_json()["timing"]["jobs"] != b.to_json()["timing"]["jobs"]


def test_repair_toggle_shows_up_in_diff():
    cl = DeformationSpec("classical")
    fixed = run_suite(cfg(suite="w2comm", deformation=cl))
    literal = run_suite(cfg(suite="w2comm", deformation=cl, repairs=C.Repairs.literal()))
    assert fixed.clean and not literal.clean
    changes = diff_reports(fixed, literal)
    assert changes and all(c["old"] == "verified" and c["new"] == "mismatch" for c in changes)


def test_sample_point_does_not_change_statuses():
    a = run_suite(cfg(suite="null3"))
    b = run_suite(cfg(suite="null3", deformation=DeformationSpec("pq", sample=SamplePoint(p=3, q="2/7"))))
    assert diff_reports(a, b) == []


def test_diff_needs_same_suite():
    a = run_suite(cfg(suite="null3"))
    b = run_suite(cfg(suite="vw"))
    with pytest.raises(ConfigError):
        diff_reports(a, b)


def test_report_round_trip():
    r = run_suite(cfg(suite="skew", count=2))
    back = Report.from_json(r.to_json())
    assert back.hash == r.hash


def test_negative_controls_are_expected_violations():
    r = run_suite(cfg(suite="fi", count=1))
    controls = [c for c in r.checks if c.extra.get("expected") == "violated"]
    assert len(controls) >= 3
    assert all(c.status == "mismatch" and c.witness for c in controls)
    assert r.summary["expected_violation_missed"] == 0


@pytest.mark.parametrize("name, deformation, suite", [("pq_shov", "pq", "shov"), ("q_sub2n", "q", "sub2n")])
def test_snapshot_is_stable(name, deformation, suite):
    r = run_suite(cfg(suite=suite, deformation=DeformationSpec(deformation), jobs=2))
    assert compare_snapshot(r, load_snapshot(SNAP / f"{name}.json")) == []


def test_snapshot_detects_drift():
    r = run_suite(cfg(suite="sub2n", deformation=DeformationSpec("q")))
    snap = load_snapshot(SNAP / "q_sub2n.json")
    key = next(iter(snap["statuses"]))
    snap["statuses"][key] = ["verified" if snap["statuses"][key][0] != "verified" else "mismatch", None]
    assert [d["check"] for d in compare_snapshot(r, snap)] == [key]


def test_full_suite_covers_every_family():
    from rpqsuper.harness import plan

    fams = {item[1].split("[")[0] for item in plan(cfg(suite="full")) if item[0] == "cat"}
    assert fams == set(C.FAMILIES)
