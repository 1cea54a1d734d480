"""Base error type shared by every module.

Each failure carries a stable machine-readable ``code`` plus the module it
belongs to, so CLI and service layers can map errors to exit reports and
HTTP statuses without string matching.
"""

from __future__ import annotations

from typing import Any


class MotifdexError(Exception):
    """Domain error with a stable code.

    Subclasses set ``code`` and ``module`` as class attributes; arbitrary
    structured context goes into ``detail`` keyword arguments.
    """

    code: str = "INTERNAL"
    module: str = "core"

    def __init__(self, message: str = "", **detail: Any):
        super().__init__(message or self.code)
        self.detail = detail

    def report(self) -> dict[str, Any]:
        """Machine-readable error report used by the CLI and the service."""
        return {
            "module": self.module,
            "code": self.code,
            "message": str(self),
            "detail": self.detail,
        }

    @classmethod
    def with_code(
        cls, code: str, module: str, message: str = "", **detail: Any
    ) -> "MotifdexError":
        """One-off error with an explicit code, for layers (CLI/service) that
        don't warrant a dedicated subclass."""
        error = cls(message, **detail)
        error.code = code
        error.module = module
        return error
