"""Command-line front end: check, bracket, table, report-diff.

Exit codes: 0 success, 1 usage or configuration error, 2 completed with mismatches.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import __version__
from . import catalog as C
from .brackets import n_bracket
from .generators import GeneratorDomainError, GeneratorSyntaxError, build, decompose, format_combination, parse_generator_list
from .harness import (
    ConfigError,
    Report,
    SuiteConfig,
    SUITES,
    compare_snapshot,
    diff_reports,
    load_snapshot,
    parse_deformation,
    parse_grid,
    run_suite,
    save_snapshot,
)
from .scalars import SamplePoint, ScalarDivisionError, parse_rational, to_text

EXIT_OK, EXIT_ERROR, EXIT_MISMATCH = 0, 1, 2

CONFIG_KEYS = {
    "suite", "deformation", "sample", "n", "seed", "count", "grid", "jobs", "truncation",
    "paper_literal", "repairs", "format", "out", "snapshot", "oscillator", "form",
}
SAMPLE_KEYS = {"p": "p", "q": "q", "lambda": "lam", "a": "a", "b": "b"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def _common(p):
    p.add_argument("--deformation", help="q | pq | abpq | classical | series:<file>")
    for name in SAMPLE_KEYS:
        p.add_argument(f"--{name}", dest=f"sample_{name}", metavar="RATIONAL", help=f"sample value of {name}")
    p.add_argument("--paper-literal", action="store_true", default=None, help="disable all typo repairs")
    p.add_argument("--format", choices=("json", "text"))
    p.add_argument("--out", help="write the output here instead of stdout")
    p.add_argument("--config", help="JSON config file; flags override its values")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rpqsuper", description="Exact checks of deformed super n-algebra relations.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="run an identity or relation suite")
    _common(c)
    c.add_argument("--suite", help=f"one of {', '.join(SUITES)}")
    c.add_argument("--grid", help='index ranges, e.g. "m=-2..2,r=1..3"')
    c.add_argument("--n", type=int, help="bracket order")
    c.add_argument("--seed", type=int)
    c.add_argument("--count", type=int, help="number of seeded instances")
    c.add_argument("--jobs", type=int, help="worker processes")
    c.add_argument("--truncation", type=int, help="matrix-oracle truncation N")
    c.add_argument("--oscillator", choices=("deformed", "plain"))
    c.add_argument("--form", choices=("structural", "paper"), help="eigenvalue form for the grading families")
    c.add_argument("--snapshot", help="compare statuses against this snapshot file")
    c.add_argument("--update-snapshot", action="store_true", help="(re)write the snapshot instead of comparing")

    b = sub.add_parser("bracket", help="evaluate one n-bracket of generators")
    _common(b)
    b.add_argument("--ops", required=True, help='comma-separated generators, e.g. "WB(1,2),WB(2,2)"')

    t = sub.add_parser("table", help="structure constants f of the W commutator")
    _common(t)
    t.add_argument("--grid", help='ranges for m and r, e.g. "m=-1..1,r=1..2"')

    d = sub.add_parser("report-diff", help="compare two JSON reports")
    d.add_argument("old")
    d.add_argument("new")
    d.add_argument("--format", choices=("json", "text"), default="text")
    d.add_argument("--out")
    return ap


# ---------------------------------------------------------------------------
# configuration


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path} ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    unknown = sorted(set(data) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"config: unknown field {unknown[0]!r}")
    return data


def merged_settings(args) -> dict:
    """Config-file values overridden by explicit flags."""
    cfg = load_config(args.config) if getattr(args, "config", None) else {}
    out = dict(cfg)
    sample = dict(cfg.get("sample", {}))
    if not isinstance(sample, dict) or set(sample) - set(SAMPLE_KEYS):
        raise ConfigError("config: sample must map p, q, lambda, a, b to rationals")
    for name in SAMPLE_KEYS:
        v = getattr(args, f"sample_{name}", None)
        if v is not None:
            sample[name] = v
    out["sample"] = sample
    for key in ("deformation", "suite", "grid", "n", "seed", "count", "jobs", "truncation",
                "oscillator", "form", "format", "out", "snapshot", "paper_literal"):
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    return out


def _sample(settings) -> SamplePoint:
    kw = {}
    for name, field in SAMPLE_KEYS.items():
        if name in settings["sample"]:
            try:
                kw[field] = parse_rational(str(settings["sample"][name]))
            except (ValueError, ZeroDivisionError):
                raise ConfigError(f"{name}: {settings['sample'][name]!r} is not a rational number") from None
    return SamplePoint(**kw)


def _repairs(settings) -> C.Repairs:
    rep = C.Repairs.literal() if settings.get("paper_literal") else C.Repairs()
    extra = settings.get("repairs", {})
    if not isinstance(extra, dict):
        raise ConfigError("repairs: must be an object of booleans")
    names = set(rep.to_dict())
    for k, v in extra.items():
        if k not in names:
            raise ConfigError(f"repairs: unknown repair {k!r}")
        if not isinstance(v, bool):
            raise ConfigError(f"repairs.{k}: must be true or false")
    return replace(rep, **extra)


def _int(settings, key, default=None):
    v = settings.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        try:
            return int(str(v))
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {v!r}") from None
    return v


def suite_config(settings) -> SuiteConfig:
    spec = parse_deformation(str(settings.get("deformation", "pq")), _sample(settings))
    grid = settings.get("grid", "")
    if isinstance(grid, dict):
        grid = ",".join(f"{k}={v[0]}..{v[1]}" for k, v in grid.items())
    return SuiteConfig(
        suite=str(settings.get("suite", "gsji")),
        deformation=spec,
        n=_int(settings, "n"),
        seed=_int(settings, "seed", 0),
        count=_int(settings, "count"),
        grid=parse_grid(str(grid)),
        repairs=_repairs(settings),
        oscillator=str(settings.get("oscillator", "deformed")),
        form=str(settings.get("form", "structural")),
        jobs=_int(settings, "jobs", 1),
        truncation=_int(settings, "truncation", 6),
        fmt=str(settings.get("format", "json")),
    )


def _emit(text: str, out):
    if out:
        try:
            with open(out, "w") as fh:
                fh.write(text + "\n")
        except OSError as exc:
            raise ConfigError(f"out: cannot write {out} ({exc.strerror})") from None
    else:
        sys.stdout.write(text + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(args) -> int:
    settings = merged_settings(args)
    cfg = suite_config(settings)
    report = run_suite(cfg)
    snap = settings.get("snapshot")
    drift = []
    if snap and args.update_snapshot:
        save_snapshot(report, snap)
    elif snap:
        drift = compare_snapshot(report, load_snapshot(snap))
    text = report.dumps() if cfg.fmt == "json" else report.to_text()
    _emit(text, settings.get("out"))
    if drift:
        sys.stderr.write(f"snapshot drift in {len(drift)} checks, first: {drift[0]['check']}\n")
        return EXIT_MISMATCH
    return EXIT_OK if report.clean else EXIT_MISMATCH


def cmd_bracket(args) -> int:
    settings = merged_settings(args)
    spec = parse_deformation(str(settings.get("deformation", "pq")), _sample(settings))
    gids = parse_generator_list(args.ops)
    if not gids:
        raise ConfigError("ops: no generators given")
    spaces = {g.space for g in gids}
    if len(spaces) > 1:
        raise ConfigError("ops: generators act on different spaces")
    ops = [build(g, spec) for g in gids]
    weights = [g.mode for g in gids]
    value = n_bracket(ops, weights if len(ops) % 2 == 0 else None, spec)
    terms = decompose(value, spec)
    if settings.get("format", "text") == "json":
        out = {
            "ops": [str(g) for g in gids],
            "deformation": spec.label(),
            "combination": None if terms is None else [[to_text(c), str(g)] for c, g in terms],
            "text": format_combination(terms),
        }
        if terms is None:
            out["operator"] = value.to_json()
        _emit(json.dumps(out, indent=2), settings.get("out"))
    else:
        _emit(format_combination(terms) if terms is not None else value.to_text(), settings.get("out"))
    return EXIT_OK


def cmd_table(args) -> int:
    settings = merged_settings(args)
    spec = parse_deformation(str(settings.get("deformation", "pq")), _sample(settings))
    rep = _repairs(settings)
    ranges = {"m": (-1, 1), "r": (1, 2)}
    for axis, lo, hi in parse_grid(str(settings.get("grid", ""))):
        if axis not in ranges:
            raise ConfigError(f"grid: the table takes m and r ranges, not {axis!r}")
        if lo > hi:
            raise ConfigError(f"grid: empty range {axis}={lo}..{hi}")
        ranges[axis] = (lo, hi)
    if ranges["r"][0] < 1:
        raise ConfigError("grid: r must be >= 1")
    ws = [(m, r) for m in range(ranges["m"][0], ranges["m"][1] + 1)
          for r in range(ranges["r"][0], ranges["r"][1] + 1) if m + r >= 1]
    rows = []
    for (m1, r1) in ws:
        for (m2, r2) in ws:
            f = C.structure_f(spec, m1, r1, m2, r2, rep)
            rows.append({"m1": m1, "r1": r1, "m2": m2, "r2": r2,
                         "terms": [{"depth": r1 + r2 - 1 - a, "coefficient": to_text(c)} for a, c in f]})
    if settings.get("format", "text") == "json":
        _emit(json.dumps({"deformation": spec.label(), "repairs": rep.to_dict(), "rows": rows}, indent=2),
              settings.get("out"))
    else:
        lines = [f"f^(m1,r1)_(m2,r2) on {spec.label()}: coefficient of W(m1+m2, depth)"]
        for row in rows:
            body = " + ".join(f"({t['coefficient']}) W(.,{t['depth']})" for t in row["terms"]) or "0"
            lines.append(f"({row['m1']},{row['r1']}) x ({row['m2']},{row['r2']}): {body}")
        _emit("\n".join(lines), settings.get("out"))
    return EXIT_OK


def _load_report(path) -> Report:
    try:
        with open(path) as fh:
            return Report.from_json(json.load(fh))
    except OSError as exc:
        raise ConfigError(f"report: cannot read {path} ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"report: {path} is not valid JSON ({exc.msg})") from None


def cmd_report_diff(args) -> int:
    old, new = _load_report(args.old), _load_report(args.new)
    changes = diff_reports(old, new)
    if args.format == "json":
        _emit(json.dumps({"changes": changes}, indent=2), args.out)
    else:
        lines = [f"{c['check']}: {c['old']} -> {c['new']}" for c in changes] or ["no changes"]
        _emit("\n".join(lines), args.out)
    return EXIT_MISMATCH if changes else EXIT_OK


COMMANDS = {"check": cmd_check, "bracket": cmd_bracket, "table": cmd_table, "report-diff": cmd_report_diff}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (ConfigError, C.CatalogError, GeneratorSyntaxError, GeneratorDomainError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
    except ScalarDivisionError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
