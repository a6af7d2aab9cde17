"""Error types with a single machine-readable schema.

Every failure surfaced by the CLI or the service serializes to
``{"code": str, "module": str, "message": str, "context": dict}`` and maps to
a stable process exit code.
"""

from __future__ import annotations

from typing import Any


class TreepotError(Exception):
    code = "internal"
    exit_code = 1

    def __init__(self, module: str, message: str, **context: Any):
        super().__init__(message)
        self.module = module
        self.message = message
        self.context = context

    def to_json(self) -> dict:
        return {
            "code": self.code,
            "module": self.module,
            "message": self.message,
            "context": {k: _jsonable(v) for k, v in self.context.items()},
        }


class SchemaError(TreepotError):
    """Malformed spec, matrix, or config input."""

    code = "schema"
    exit_code = 2


class HypothesisError(TreepotError):
    """An ultrametric hypothesis (H1-H4) fails or cannot be certified."""

    code = "hypothesis"
    exit_code = 3


class UncertifiedError(TreepotError):
    """A tail bound or bracket could not be certified at the requested tolerance."""

    code = "uncertified"
    exit_code = 4


class CertificationError(TreepotError):
    """A certified identity check (inverse, symmetry, support) failed."""

    code = "certification"
    exit_code = 5


class DomainError(TreepotError):
    """Operation undefined for the input (recurrent exit measure, zero-mass atom, ...)."""

    code = "domain"
    exit_code = 6


def _jsonable(v: Any) -> Any:
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    return str(v)
