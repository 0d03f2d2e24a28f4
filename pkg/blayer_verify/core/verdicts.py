"""Verdict values shared by every check."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

import numpy as np


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_APPLICABLE = "not-applicable"
    INDETERMINATE = "indeterminate"

    @classmethod
    def combine(cls, verdicts: Iterable["Verdict"]) -> "Verdict":
        """fail beats indeterminate beats pass; all not-applicable stays not-applicable."""
        vs = list(verdicts)
        if cls.FAIL in vs:
            return cls.FAIL
        if cls.INDETERMINATE in vs:
            return cls.INDETERMINATE
        if vs and all(v is cls.NOT_APPLICABLE for v in vs):
            return cls.NOT_APPLICABLE
        return cls.PASS


def to_jsonable(value: Any) -> Any:
    """Convert numpy/complex/enum values into plain JSON types."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": float(np.real(value)), "im": float(np.imag(value))}
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass(frozen=True)
class CheckResult:
    """One verdict with the measured quantities and, on fail, a witness."""

    name: str
    verdict: Verdict
    measured: dict[str, Any] = field(default_factory=dict)
    witness: dict[str, Any] | None = None
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict in (Verdict.PASS, Verdict.NOT_APPLICABLE)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"verdict": self.verdict.value, "measured": to_jsonable(self.measured)}
        if self.witness is not None:
            out["witness"] = to_jsonable(self.witness)
        if self.note:
            out["note"] = self.note
        return out
