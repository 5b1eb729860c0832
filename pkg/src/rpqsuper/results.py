"""Outcome records shared by the identity checkers, the catalog and the harness."""

from __future__ import annotations

from dataclasses import dataclass, field

STATUSES = ("verified", "mismatch", "conditional", "skipped")


@dataclass
class CheckResult:
    id: str
    params: dict
    status: str
    witness: dict | None = None
    trace: str | None = None
    millis: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"bad status {self.status!r}")
        if self.status == "mismatch" and self.witness is None:
            raise ValueError("a mismatch needs a witness")

    @property
    def ok(self) -> bool:
        return self.status == "verified"

    def sort_key(self):
        return (self.id, _params_key(self.params))

    def to_json(self, timings: bool = True) -> dict:
        out = {"id": self.id, "params": self.params, "status": self.status}
        if self.witness is not None:
            out["witness"] = self.witness
        if self.trace is not None:
            out["trace"] = self.trace
        if self.extra:
            out["extra"] = self.extra
        if timings:
            out["millis"] = round(self.millis, 3)
        return out

    @classmethod
    def from_json(cls, d: dict) -> "CheckResult":
        return cls(
            d["id"], d["params"], d["status"], d.get("witness"), d.get("trace"),
            d.get("millis", 0.0), d.get("extra", {}),
        )


def _params_key(params: dict):
    return tuple((k, _orderable(v)) for k, v in sorted(params.items()))


def _orderable(v):
    if isinstance(v, (list, tuple)):
        return (1, tuple(_orderable(x) for x in v))
    if isinstance(v, (int, float)):
        return (0, v, "")
    return (2, str(v))


def from_difference(rid: str, params: dict, lhs, rhs, trace=None) -> CheckResult:
    """verified iff lhs == rhs as operators."""
    from .shiftalg import first_difference

    w = first_difference(lhs, rhs)
    return CheckResult(rid, params, "verified" if w is None else "mismatch", w, trace)
