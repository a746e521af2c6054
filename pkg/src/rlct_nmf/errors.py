"""Exception types shared across the toolkit."""

from __future__ import annotations


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class EstimationError(RuntimeError):
    """A Monte Carlo estimate could not be formed from the available samples.

    ``diagnostics`` carries whatever the estimator knew at the point of failure
    so callers can decide how to enlarge the budget.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
