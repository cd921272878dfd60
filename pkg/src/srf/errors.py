"""Exception types shared across the package."""

from __future__ import annotations


class DimensionTooLargeError(ValueError):
    """Corner enumeration is 2^n wide; raised when n exceeds the cap."""


class BudgetExceededError(ValueError):
    """A grid or quadrature request would need more than the point budget."""


class GradientUnsupportedError(RuntimeError):
    """The oracle cannot supply gradients, so white-box rules cannot run."""


class BetaOutOfRangeError(ValueError):
    """The emphasis factor violates beta < 2/(2n - 1)."""


class EvaluatorError(RuntimeError):
    """An external evaluator failed to start, answer, or compute."""


class ProtocolError(EvaluatorError):
    """The external evaluator broke the wire protocol."""
