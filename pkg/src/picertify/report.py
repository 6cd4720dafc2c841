"""Check records and their JSON/CSV serialisation."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class CheckResult:
    kind: str
    passed: bool
    worst_margin: float
    witness: dict | None = None
    count: int = 0
    tol: float = 0.0
    informational: bool = False
    gamma: float | None = None
    iteration: int | None = None
    exact_margin: float | None = None
    slack: float | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.passed and self.witness is None:
            raise ValueError(f"failed check {self.kind!r} must carry a witness")

    @property
    def counts_as_failure(self) -> bool:
        return not self.passed and not self.informational

    def to_dict(self) -> dict:
        return jsonable(asdict(self))


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)
    environment: dict = field(default_factory=dict)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check

    @property
    def passed(self) -> bool:
        return not any(c.counts_as_failure for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if c.counts_as_failure]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "environment": jsonable(self.environment),
                "checks": [c.to_dict() for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "gamma", "i", "passed", "informational", "margin", "exact_margin", "slack", "witness"])
        for c in self.checks:
            w.writerow([c.kind, fmt(c.gamma), "" if c.iteration is None else c.iteration, int(c.passed),
                        int(c.informational), fmt(c.worst_margin), fmt(c.exact_margin), fmt(c.slack),
                        "" if c.witness is None else json.dumps(jsonable(c.witness), sort_keys=True)])
        return buf.getvalue()


def fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def digest(d: dict) -> str:
    return hashlib.sha256(json.dumps(jsonable(d), sort_keys=True).encode()).hexdigest()[:16]
