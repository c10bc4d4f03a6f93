"""Exception and warning types shared across the package.

Every error raised on a violated contract derives from :class:`RejoptError`,
so callers (and the CLI) can map failure families to exit codes without
string matching.
"""

from __future__ import annotations


class RejoptError(Exception):
    """Base class for all package errors."""


class ConfigError(RejoptError):
    """Invalid configuration: unknown option values, incompatible choices."""


class DomainError(RejoptError, ValueError):
    """An argument value lies outside the documented domain."""


class ShapeError(RejoptError, ValueError):
    """Array arguments have the wrong rank or inconsistent lengths."""


class SizeError(RejoptError, ValueError):
    """A size limit was violated (too few samples, too many atoms, ...)."""


class ParseError(RejoptError, ValueError):
    """Malformed input text. The message carries the offending location."""


class NumericError(RejoptError, ArithmeticError):
    """A computation produced or received non-finite numbers."""


class ContractError(RejoptError, TypeError):
    """Objects were combined in a way their contracts forbid."""


class NotFittedError(RejoptError, AttributeError):
    """An estimator method that requires fit() was called before fit()."""


class UndefinedRiskError(RejoptError, ZeroDivisionError):
    """Selective risk was requested for a selector that accepts nothing."""


class InfeasibleTargetWarning(UserWarning):
    """No selector with positive coverage can meet the requested risk target.

    Emitted (not raised) by the bounded-improvement solver, which then
    returns the reject-everything selector.
    """


class DegenerateDataWarning(UserWarning):
    """Data quality caveat: the result is valid but degenerate (empty bins,
    constant columns, ...)."""
