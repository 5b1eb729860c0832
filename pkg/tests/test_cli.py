import json
from importlib import resources

import jsonschema
import pytest

from rpqsuper.cli import main

SCHEMA = json.loads(resources.files("rpqsuper").joinpath("report_schema.json").read_text())


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_bracket_example(capsys):
    code, out, _ = run(capsys, "bracket", "--deformation", "classical", "--ops", "WB(1,2),WB(2,2)")
    assert code == 0
    assert out.strip() == "1 * WB(3,2)"


def test_bracket_json(capsys):
    code, out, _ = run(capsys, "bracket", "--deformation", "q", "--ops", "WB(0,2),WB(1,1)", "--format", "json")
    assert code == 0
    assert json.loads(out)["deformation"].startswith("q")


def test_literal_w2comm_exits_2_with_valid_json(capsys):
    code, out, _ = run(capsys, "check", "--suite", "w2comm", "--deformation", "classical", "--paper-literal",
                       "--format", "json")
    assert code == 2
    rep = json.loads(out)
    jsonschema.validate(rep, SCHEMA)
    assert rep["summary"]["mismatch"] > 0


def test_repaired_w2comm_exits_0(capsys):
    code, _, _ = run(capsys, "check", "--suite", "w2comm", "--deformation", "classical")
    assert code == 0


def test_text_format(capsys):
    code, out, _ = run(capsys, "check", "--suite", "null3", "--format", "text")
    assert code == 0 and "verified" in out


@pytest.mark.parametrize("argv, field", [
    (["check", "--bogus"], "usage"),
    (["check", "--suite", "nope"], "suite"),
    (["check", "--grid", "m=a..b"], "grid"),
    (["check", "--deformation", "xyz"], "deformation"),
    (["check", "--suite", "gsji", "--n", "3"], "n"),
    (["bracket", "--ops", "WB(0,0)"], "m+r"),
    (["bracket", "--ops", "WB(1,"], "WB"),
    (["check", "--suite", "null3", "--q", "1/0"], "q"),
])
def test_errors_exit_1_and_name_the_field(capsys, argv, field):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert field in err


def test_config_file_and_override(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"suite": "w2comm", "deformation": "classical", "paper_literal": True}))
    code, _, _ = run(capsys, "check", "--config", str(conf))
    assert code == 2
    conf.write_text(json.dumps({"suite": "w2comm", "deformation": "q"}))
    out = tmp_path / "r.json"
    code, _, _ = run(capsys, "check", "--config", str(conf), "--deformation", "classical", "--out", str(out))
    assert code == 0
    assert json.loads(out.read_text())["config"]["deformation"] == "classical"


def test_config_unknown_field(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"suite": "w2comm", "colour": "red"}))
    code, _, err = run(capsys, "check", "--config", str(conf))
    assert code == 1 and "colour" in err


def test_report_diff(tmp_path, capsys):
    a, b, c = (tmp_path / x for x in ("a.json", "b.json", "c.json"))
    base = ["check", "--suite", "w2comm", "--deformation", "classical"]
    run(capsys, *base, "--out", str(a))
    run(capsys, *base, "--paper-literal", "--out", str(b))
    run(capsys, "check", "--suite", "null3", "--out", str(c))
    assert run(capsys, "report-diff", str(a), str(a))[0] == 0
    code, out, _ = run(capsys, "report-diff", str(a), str(b), "--format", "json")
    assert code == 2 and json.loads(out)["changes"]
    assert run(capsys, "report-diff", str(a), str(c))[0] == 1
    assert run(capsys, "report-diff", str(a), str(tmp_path / "missing.json"))[0] == 1


def test_snapshot_round_trip(tmp_path, capsys):
    snap = str(tmp_path / "s.json")
    args = ["check", "--suite", "vw", "--deformation", "q"]
    assert run(capsys, *args, "--snapshot", snap, "--update-snapshot")[0] == 2
    assert run(capsys, *args, "--snapshot", snap)[0] == 2
    # a snapshot from another configuration is a usage error, not drift
    assert run(capsys, "check", "--suite", "vw", "--deformation", "classical", "--snapshot", snap)[0] == 1


def test_table(capsys):
    code, out, _ = run(capsys, "table", "--deformation", "classical", "--grid", "m=1..2,r=2..2", "--format", "json")
    assert code == 0
    rows = json.loads(out)["rows"]
    row = next(r for r in rows if (r["m1"], r["m2"]) == (1, 2))
    assert row["terms"] == [{"depth": 2, "coefficient": "1"}]


def test_gsji_n4_example(capsys):
    code, out, _ = run(capsys, "check", "--deformation", "pq", "--suite", "gsji", "--n", "4", "--seed", "7",
                       "--format", "json", "--jobs", "4")
    assert code == 0
    jsonschema.validate(json.loads(out), SCHEMA)
