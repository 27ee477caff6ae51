"""Verdict objects shared by the checkers, with JSON rendering."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any


def jsonable(value: Any) -> Any:
    """Convert rationals to ``num/den`` strings and containers recursively."""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, int):
        return value
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, frozenset, set)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [jsonable(v) for v in items]
    if hasattr(value, "to_json"):
        return value.to_json()
    return str(value)


@dataclass(frozen=True)
class CheckReport:
    """A verdict plus either a witness (on failure) or a certificate (on success)."""

    ok: bool
    check: str
    message: str = ""
    witness: dict[str, Any] = field(default_factory=dict)
    certificate: Any = None

    def __bool__(self) -> bool:
        return self.ok

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"check": self.check, "verdict": self.ok}
        if self.message:
            out["message"] = self.message
        if self.witness:
            out["witness"] = jsonable(self.witness)
        if self.certificate is not None:
            out["certificate"] = jsonable(self.certificate)
        return out
