"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: :class:`DomainError` and
:class:`InfeasibleError` exit 2, :class:`FitError` exits 3 and
:class:`InputError` exits 4.
"""

from __future__ import annotations


class MoEScaleError(Exception):
    """Base class for all package errors."""


class DomainError(MoEScaleError, ValueError):
    """An argument lies outside the admissible domain of an operation."""


class InputError(MoEScaleError, ValueError):
    """Malformed input file or configuration."""


class InfeasibleError(MoEScaleError):
    """No integer architecture satisfies the requested targets.

    ``kind`` is one of ``"M"``, ``"shape"``, ``"rounding"``, ``"ratio"``,
    ``"target"``.
    """

    def __init__(self, kind: str, message: str):
        super().__init__(f"infeasible-{kind}: {message}")
        self.kind = kind


class RoundingReject(InfeasibleError):
    """Best integer rounding still misses a target by more than the tolerance."""

    def __init__(self, message: str, solution=None):
        super().__init__("rounding", message)
        self.solution = solution

    @property
    def rounding_trace(self):
        return [] if self.solution is None else self.solution.rounding_trace


class FitError(MoEScaleError):
    """A curve fit failed; ``best`` carries the best-so-far result if any."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class LawSetError(MoEScaleError):
    """A law registry is incomplete or internally inconsistent."""


class StageError(MoEScaleError):
    """Failure inside the design pipeline, tagged with the failing stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
