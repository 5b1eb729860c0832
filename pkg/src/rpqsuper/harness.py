"""Suites, parallel execution, deterministic reports, diffs and snapshots."""

from __future__ import annotations

import hashlib
import json
import random
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import __version__
from . import catalog as C
from .brackets import (
    bracket_with_distinguished,
    check_fi_variants,
    check_gbi_gsbi,
    check_gsji,
    check_skew,
    eq5_expansion,
    eq6_expansions,
    n_bracket,
)
from .generators import GeneratorId, build
from .results import CheckResult
from .scalars import DeformationSpec, SamplePoint
from .shiftalg import LANDAU, compose, first_difference, random_operator, to_matrix, window_equal


class ConfigError(ValueError):
    """Bad suite configuration; the message names the offending field."""


IDENTITY_SUITES = ("gsji", "skew", "gbi", "forms", "fi", "oracle")
CATALOG_SUITES = {
    "shov": tuple(f"SHOV{i}" for i in range(1, 10)),
    "lim": tuple(f"LIM{i}" for i in range(1, 6)),
    "alg3": tuple(f"ALG3_{i}" for i in range(1, 6)),
    "w2comm": ("W2_COMM",),
    "lperp": ("LPERP",),
    "triple": ("TRIPLE_LH",),
    "null3": ("NULL3",),
    "sub3": ("SUB3",),
    "vw": ("VW",),
    "witt3": ("WITT3",),
    "nalg": ("NALG",),
    "sub2n": ("SUB2N",),
    "exsub": ("EX_SUB4", "EX_SUB6"),
}
for _f in C.FAMILIES:
    CATALOG_SUITES.setdefault(_f.lower(), (_f,))
CATALOG_SUITES["all"] = C.FAMILIES
SUITES = IDENTITY_SUITES + tuple(CATALOG_SUITES) + ("full",)

DEFAULT_COUNTS = {"gsji": 50, "skew": 20, "gbi": 10, "forms": 20, "fi": 10, "oracle": 100}
GRID_KEYS = {"m": "m", "r": "r", "s": "s", "lm": "lm", "ls": "ls", "n": "m", "alpha": "s", "k": "ls", "h": "ls"}


@dataclass(frozen=True)
class SuiteConfig:
    suite: str = "gsji"
    deformation: DeformationSpec = field(default_factory=lambda: DeformationSpec("pq"))
    n: int | None = None
    seed: int = 0
    count: int | None = None
    grid: tuple = ()                 # ((axis, lo, hi), ...)
    repairs: C.Repairs = C.Repairs()
    oscillator: str = "deformed"
    form: str = "structural"
    jobs: int = 1
    truncation: int = 6
    fmt: str = "json"

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ConfigError(f"suite: unknown suite {self.suite!r}; choose from {', '.join(SUITES)}")
        if self.jobs < 1:
            raise ConfigError("jobs: must be at least 1")
        if self.count is not None and self.count < 1:
            raise ConfigError("count: must be at least 1")
        if self.truncation < 1:
            raise ConfigError("truncation: must be positive")
        if self.fmt not in ("json", "text"):
            raise ConfigError(f"format: must be json or text, not {self.fmt!r}")
        for axis, lo, hi in self.grid:
            if axis not in GRID_KEYS:
                raise ConfigError(f"grid: unknown axis {axis!r}; known axes {', '.join(sorted(GRID_KEYS))}")
            if lo > hi:
                raise ConfigError(f"grid: empty range {axis}={lo}..{hi}")
        if self.suite == "gsji" and self.n is not None and (self.n < 2 or self.n % 2):
            raise ConfigError("n: the gsji suite needs an even bracket order >= 2")
        if self.suite == "gbi" and self.n is not None and (self.n < 3 or self.n % 2 == 0):
            raise ConfigError("n: the gbi suite needs an odd bracket order >= 3")
        if self.suite == "skew" and self.n is not None and self.n < 2:
            raise ConfigError("n: the skew suite needs n >= 2")
        try:
            C.Options(self.repairs, self.oscillator, self.form)
        except C.CatalogError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def options(self) -> C.Options:
        return C.Options(self.repairs, self.oscillator, self.form)

    def to_json(self) -> dict:
        """Config echo; excludes the worker count, which must not change results."""
        d = self.deformation
        return {
            "suite": self.suite,
            "deformation": d.label(),
            "sample": d.sample.to_dict(),
            "n": self.n,
            "seed": self.seed,
            "count": self.count,
            "grid": {a: [lo, hi] for a, lo, hi in self.grid},
            "repairs": self.repairs.to_dict(),
            "oscillator": self.oscillator,
            "form": self.form,
            "truncation": self.truncation,
        }


def parse_grid(text: str) -> tuple:
    """"m=-2..2,r=1..3" -> (("m", -2, 2), ("r", 1, 3))."""
    out = []
    for item in filter(None, (x.strip() for x in text.split(","))):
        m = re.fullmatch(r"([a-z]+)\s*=\s*([+-]?\d+)(?:\s*\.\.\s*([+-]?\d+))?", item)
        if not m:
            raise ConfigError(f"grid: cannot parse {item!r}; expected e.g. m=-2..2")
        lo = int(m.group(2))
        hi = int(m.group(3)) if m.group(3) is not None else lo
        out.append((m.group(1), lo, hi))
    return tuple(out)


def parse_deformation(text: str, sample: SamplePoint | None = None) -> DeformationSpec:
    sample = sample or SamplePoint()
    try:
        if text.startswith("series:"):
            return DeformationSpec.series_from_file(text[len("series:"):], sample)
        return DeformationSpec(text, sample=sample)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"deformation: {exc}") from None


# ---------------------------------------------------------------------------
# identity work units


def _rng(cfg: SuiteConfig, tag: str, i: int) -> random.Random:
    return random.Random(f"{cfg.seed}:{tag}:{i}")


def _random_ops(spec, rng, parities, nterms=2):
    return [random_operator(LANDAU, spec, p, rng, nterms) for p in parities]


W_KINDS_N4 = ("WB", "WB", "WBbar", "WF", "WF", "WFbar", "WFbar")


def _gsji_ops(cfg, i):
    """Homogeneous random operators with uniform weights (n=2) or W generators (n>=4)."""
    n = cfg.n or 2
    rng = _rng(cfg, "gsji", i)
    spec = cfg.deformation
    size = 2 * n - 1
    if n == 2:
        pars = [rng.randrange(2) for _ in range(size)]
        w = rng.randint(1, 3)
        return _random_ops(spec, rng, pars), [w] * size, pars
    kinds = [W_KINDS_N4[k % len(W_KINDS_N4)] for k in range(size)]
    gids = []
    while len(gids) < size:
        k = kinds[len(gids)]
        r = rng.randint(1, 3)
        g = (k, (rng.randint(1 - r, 2), r))
        if g not in [(x.kind, x.args) for x in gids]:
            gids.append(GeneratorId(*g))
    # one common weight: the even-bracket prefactor then agrees for every inner subset
    w = rng.randint(1, 2)
    return [build(g, spec) for g in gids], [w] * size, [str(g) for g in gids]


def _unit_gsji(cfg, i, workers=1):
    ops, weights, desc = _gsji_ops(cfg, i)
    n = cfg.n or 2
    params = {"n": n, "instance": i, "weights": weights, "operands": desc}
    return check_gsji(ops, weights, cfg.deformation, n, workers=workers, params=params)


def _unit_skew(cfg, i):
    ns = [cfg.n] if cfg.n else [3, 4]
    n = ns[i % len(ns)]
    rng = _rng(cfg, "skew", i)
    pars = [rng.randrange(2) for _ in range(n)]
    ops = _random_ops(cfg.deformation, rng, pars)
    perm = list(range(n))
    rng.shuffle(perm)
    weights = [rng.randint(-2, 2) for _ in range(n)] if n % 2 == 0 else None
    return check_skew(ops, perm, weights, cfg.deformation, {"n": n, "instance": i, "perm": perm, "parities": pars})


GBI_PATTERNS = ("even", "odd", "mixed")


def _unit_gbi(cfg, i):
    n = cfg.n or 3
    pattern = GBI_PATTERNS[i % len(GBI_PATTERNS)]
    rng = _rng(cfg, "gbi", i)
    size = 3 * n - 3
    if pattern == "even":
        pars = [0] * (size + 1)
    elif pattern == "odd":
        pars = [1] * (size + 1)
    else:
        pars = [k % 2 for k in range(size + 1)]
    ops = _random_ops(cfg.deformation, rng, pars, nterms=1)
    return check_gbi_gsbi(ops[0], ops[1:], n, cfg.deformation,
                          params={"n": n, "instance": i, "pattern": pattern})


FORMS = ("EQ5", "EQ6a", "EQ6b", "EQ11", "EQ12")


def _unit_forms(cfg, i):
    form = FORMS[i % len(FORMS)]
    rng = _rng(cfg, "forms", i)
    spec = cfg.deformation
    t0 = time.perf_counter()
    if form == "EQ5":
        pars = [rng.randrange(2) for _ in range(3)]
        ops = _random_ops(spec, rng, pars)
        lhs, rhs = eq5_expansion(*ops), n_bracket(ops)
        weights = None
    elif form in ("EQ6a", "EQ6b"):
        pars = [rng.randrange(2) for _ in range(4)]
        ops = _random_ops(spec, rng, pars)
        weights = [rng.randint(-2, 2) for _ in range(4)]
        first, second = eq6_expansions(ops, weights, spec)
        lhs, rhs = (first if form == "EQ6a" else second), n_bracket(ops, weights, spec)
    else:
        k = rng.choice([2, 3])
        extra = 1 if form == "EQ12" else 0
        pars = [rng.randrange(2) for _ in range(k + 1 + extra)]
        ops = _random_ops(spec, rng, pars)
        order = k + 1 + extra
        weights = [rng.randint(-2, 2) for _ in range(order)] if order % 2 == 0 else None
        Z = ops[-1] if extra else None
        As = ops[1:k + 1]
        lhs = bracket_with_distinguished(ops[0], As, Z, weights, spec, literal=not cfg.repairs.koszul_start)
        rhs = n_bracket(ops, weights, spec)
    w = first_difference(lhs, rhs)
    res = CheckResult(form, {"instance": i, "parities": pars, "weights": weights},
                      "verified" if w is None else "mismatch", w)
    res.millis = (time.perf_counter() - t0) * 1000
    return res


# paper instances for the negative controls
FI3_INSTANCES = (
    # super Witt 3-algebra operators
    ("WB(0,2)", "WB(-1,2)", "WB(-1,2)", "WF(2,1)", "WB(2,2)"),
    ("WB(-1,2)", "WB(1,2)", "WB(1,2)", "WF(2,1)", "WB(2,2)"),
    # sub-3-algebra operators of higher depth
    ("WB(1,2)", "WF(1,3)", "WB(1,3)", "WB(-1,3)", "WB(-1,2)"),
    ("WF(-1,2)", "WB(0,3)", "WB(1,1)", "WB(-1,3)", "WB(1,3)"),
)
FI2N_INSTANCES = (
    (0, 1, 2, -1, 3, -2, 1),
    (-2, 2, 0, 2, 3, -1, -2),
)


def _unit_fi(cfg, i):
    spec = cfg.deformation
    fixed = len(FI3_INSTANCES) + len(FI2N_INSTANCES)
    if i < len(FI3_INSTANCES):
        texts = FI3_INSTANCES[i]
        from .generators import parse_generator_expr

        ops = [build(parse_generator_expr(t), spec) for t in texts]
        res = check_fi_variants("SuperFI3", ops, params={"instance": i, "operands": list(texts)})
        res.extra = {"expected": "violated"}
        return res
    if i < fixed:
        ms = FI2N_INSTANCES[i - len(FI3_INSTANCES)]
        gids = [GeneratorId("WB", (m, 3)) for m in ms]
        ops = [build(g, spec) for g in gids]
        res = check_fi_variants("SuperFI2n", ops, list(ms), spec, N=4,
                                params={"instance": i, "N": 4, "operands": [str(g) for g in gids]})
        res.extra = {"expected": "violated"}
        return res
    # positive control: the lambda -> 0 three-algebra on abstract generators
    rng = _rng(cfg, "fi", i)
    gens = []
    for _ in range(5):
        a = C.FormalCombo.gen(rng.randint(-2, 2), rng.randint(0, 2))
        b = C.FormalCombo.gen(rng.randint(-2, 2), rng.randint(0, 2))
        gens.append(a + rng.randint(1, 3) * b)
    br3 = C.w3_bracket(spec, cfg.repairs)
    desc = [sorted([list(k), str(v)] for k, v in g.terms.items()) for g in gens]
    res = check_fi_variants("FI", gens, br3=br3, params={"instance": i, "algebra": "w3-limit", "operands": desc})
    if spec.deformed:
        res.extra = {"note": "deformed three-algebra"}
    return res


def _unit_oracle(cfg, i):
    """Symbolic equality must imply safe-window equality of truncated matrices."""
    rng = _rng(cfg, "oracle", i)
    spec = cfg.deformation
    t0 = time.perf_counter()
    pars = [rng.randrange(2) for _ in range(3)]
    a, b, c = _random_ops(spec, rng, pars)
    x = compose(compose(a, b), c)
    y = compose(a, compose(b, c))
    params = {"instance": i, "parities": pars, "N": cfg.truncation}
    sym = x == y
    status, witness = "verified", None
    if sym:
        reach = max(x.reach(), a.reach() + b.reach() + c.reach())
        N = max(cfg.truncation, 2 * reach + 1)
        mx, win = to_matrix(x, N, spec.sample, reach)
        my, _ = to_matrix(y, N, spec.sample, reach)
        ma, _ = to_matrix(a, N, spec.sample, reach)
        mb, _ = to_matrix(b, N, spec.sample, reach)
        mc, _ = to_matrix(c, N, spec.sample, reach)
        if not window_equal(mx, my, win) or not window_equal(mx, ma * mb * mc, win):
            status, witness = "mismatch", {"reason": "symbolically equal operators differ in the safe window", "N": N}
    else:
        status, witness = "mismatch", {"reason": "associativity of the symbolic product failed"}
    res = CheckResult("ORACLE", params, status, witness)
    res.millis = (time.perf_counter() - t0) * 1000
    return res


UNIT_FNS = {"gsji": _unit_gsji, "skew": _unit_skew, "gbi": _unit_gbi, "forms": _unit_forms,
            "fi": _unit_fi, "oracle": _unit_oracle}


def _count(cfg: SuiteConfig, suite: str) -> int:
    if suite == "gsji" and (cfg.n or 2) >= 4:
        return cfg.count or 1
    if suite == "gbi":
        return cfg.count or DEFAULT_COUNTS["gbi"] * len(GBI_PATTERNS)
    if suite == "fi":
        return len(FI3_INSTANCES) + len(FI2N_INSTANCES) + (cfg.count or DEFAULT_COUNTS["fi"])
    if suite == "skew":
        return cfg.count or DEFAULT_COUNTS["skew"] * (1 if cfg.n else 2)
    if suite == "forms":
        return cfg.count or DEFAULT_COUNTS["forms"] * len(FORMS)
    return cfg.count or DEFAULT_COUNTS[suite]


# ---------------------------------------------------------------------------
# catalog work units


def _catalog_grid(cfg: SuiteConfig) -> dict:
    g = {}
    for axis, lo, hi in cfg.grid:
        g[GRID_KEYS[axis]] = (lo, hi)
    return g


def _unit_catalog(args):
    rid_text, cfg = args
    rid = C.parse_relation_id(rid_text)
    res = C.compare(rid, cfg.deformation, cfg.options)
    return res


def _unit_identity(args):
    suite, i, cfg = args
    return UNIT_FNS[suite](cfg, i)


# ---------------------------------------------------------------------------
# reports


@dataclass
class Report:
    config: dict
    checks: list
    version: str = __version__
    wall_seconds: float = 0.0
    jobs: int = 1

    @property
    def summary(self) -> dict:
        out = {"verified": 0, "mismatch": 0, "conditional": 0, "skipped": 0, "total": len(self.checks)}
        unexpected = 0
        for c in self.checks:
            out[c.status] += 1
            if c.status == "mismatch" and c.extra.get("expected") != "violated":
                unexpected += 1
        out["unexpected_mismatch"] = unexpected
        out["expected_violation_missed"] = sum(
            1 for c in self.checks if c.extra.get("expected") == "violated" and c.status != "mismatch")
        return out

    @property
    def clean(self) -> bool:
        s = self.summary
        return s["unexpected_mismatch"] == 0 and s["expected_violation_missed"] == 0

    def semantic(self) -> dict:
        return {
            "config": self.config,
            "checks": [c.to_json(timings=False) for c in self.checks],
            "summary": self.summary,
            "version": self.version,
        }

    @property
    def hash(self) -> str:
        blob = json.dumps(self.semantic(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "checks": [c.to_json() for c in self.checks],
            "summary": self.summary,
            "version": self.version,
            "hash": self.hash,
            "timing": {"wall_seconds": round(self.wall_seconds, 3), "jobs": self.jobs},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False)

    def to_text(self) -> str:
        lines = [f"suite {self.config['suite']} on {self.config['deformation']} (version {self.version})"]
        for c in self.checks:
            params = ",".join(f"{k}={_short(v)}" for k, v in c.params.items())
            line = f"{c.status:<12} {c.id}[{params}]"
            if c.extra.get("expected") == "violated":
                line += "  (negative control)"
            if c.witness:
                line += "  witness: " + json.dumps(c.witness, sort_keys=True)[:300]
            lines.append(line)
        s = self.summary
        lines.append(
            f"summary: {s['verified']} verified, {s['mismatch']} mismatch, {s['conditional']} conditional, "
            f"{s['skipped']} skipped ({s['total']} checks, {self.wall_seconds:.2f}s)"
        )
        lines.append(f"hash: {self.hash}")
        return "\n".join(lines)

    @classmethod
    def from_json(cls, d: dict) -> "Report":
        try:
            checks = [CheckResult.from_json(c) for c in d["checks"]]
            t = d.get("timing", {})
            return cls(d["config"], checks, d.get("version", "?"), t.get("wall_seconds", 0.0), t.get("jobs", 1))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"report: malformed report ({exc})") from None


def _short(v):
    if isinstance(v, list):
        return "/".join(str(x) for x in v)
    return str(v)


def plan(cfg: SuiteConfig) -> list:
    """All work units, in their final report order."""
    suites = []
    if cfg.suite == "full":
        suites = list(IDENTITY_SUITES) + ["all"]
    else:
        suites = [cfg.suite]
    units = []
    for s in suites:
        if s in IDENTITY_SUITES:
            units += [("id", s, i) for i in range(_count(cfg, s))]
        else:
            grid = _catalog_grid(cfg)
            for fam in CATALOG_SUITES[s]:
                try:
                    rids = C.default_grid(fam, grid)
                except C.CatalogError as exc:
                    raise ConfigError(f"grid: {exc}") from None
                units += [("cat", str(r), None) for r in rids]
    if not units:
        raise ConfigError("grid: the selected ranges produce no checks")
    return units


def run_suite(cfg: SuiteConfig) -> Report:
    t0 = time.perf_counter()
    units = plan(cfg)
    results = []
    serial_gsji = cfg.suite in ("gsji", "full") and (cfg.n or 2) >= 4
    if serial_gsji:
        # one big instance at a time; the bracket layer parallelizes its permutation blocks
        for kind, name, i in units:
            if kind == "id" and name == "gsji":
                results.append(_unit_gsji(cfg, i, workers=cfg.jobs))
        units = [u for u in units if not (u[0] == "id" and u[1] == "gsji")]
    args = []
    for kind, name, i in units:
        args.append(("cat", (name, cfg)) if kind == "cat" else ("id", (name, i, cfg)))
    results += _map(args, cfg.jobs)
    for r in results:
        r.params = json.loads(json.dumps(r.params))
    results.sort(key=CheckResult.sort_key)
    return Report(cfg.to_json(), results, __version__, time.perf_counter() - t0, cfg.jobs)


def _dispatch(item):
    kind, a = item
    return _unit_catalog(a) if kind == "cat" else _unit_identity(a)


def _map(args, jobs):
    if jobs <= 1 or len(args) <= 1:
        return [_dispatch(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_dispatch, args, chunksize=max(1, len(args) // (jobs * 8))))


# ---------------------------------------------------------------------------
# diffs and snapshots

_NON_IDENTITY = ("repairs", "sample", "truncation", "oscillator", "form")


def config_key(config: dict) -> str:
    """Hash of the fields that select which checks run (not how they are evaluated)."""
    core = {k: v for k, v in config.items() if k not in _NON_IDENTITY}
    return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()[:16]


def check_key(c: CheckResult) -> str:
    return c.id + json.dumps(c.params, sort_keys=True, separators=(",", ":"))


def diff_reports(old: Report, new: Report) -> list:
    """Per-check status changes; empty when the two reports agree semantically."""
    if config_key(old.config) != config_key(new.config):
        raise ConfigError("report: the two reports were produced by different suite configurations")
    a = {check_key(c): c for c in old.checks}
    b = {check_key(c): c for c in new.checks}
    out = []
    for k in sorted(set(a) | set(b)):
        x, y = a.get(k), b.get(k)
        if x is None or y is None:
            out.append({"check": k, "old": x.status if x else None, "new": y.status if y else None})
        elif x.status != y.status or x.witness != y.witness:
            out.append({"check": k, "old": x.status, "new": y.status})
    return out


def _witness_digest(w) -> str | None:
    if w is None:
        return None
    return hashlib.sha256(json.dumps(w, sort_keys=True).encode()).hexdigest()[:16]


def snapshot_of(report: Report) -> dict:
    return {
        "config_key": config_key(report.config),
        "config": {k: v for k, v in report.config.items()},
        "statuses": {check_key(c): [c.status, _witness_digest(c.witness)] for c in report.checks},
    }


def save_snapshot(report: Report, path) -> None:
    with open(path, "w") as fh:
        json.dump(snapshot_of(report), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_snapshot(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"snapshot: cannot read {path} ({exc})") from None


def compare_snapshot(report: Report, snap: dict) -> list:
    """Entries whose status or witness digest drifted from the snapshot."""
    cur = snapshot_of(report)
    if cur["config_key"] != snap.get("config_key"):
        raise ConfigError("snapshot: taken with a different suite configuration")
    old, new = snap.get("statuses", {}), cur["statuses"]
    out = []
    for k in sorted(set(old) | set(new)):
        if old.get(k) != new.get(k):
            out.append({"check": k, "old": old.get(k), "new": new.get(k)})
    return out
