"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage errors exit 1, FormatError and
ValidationError exit 2, DecodeFailure exits 3.
"""


class RodecError(Exception):
    """Base class for all toolkit errors."""


class FormatError(RodecError):
    """A file does not conform to its on-disk format (bad magic, bad header,
    malformed line). Carries a human-readable location where possible."""


class ValidationError(RodecError):
    """Well-formed input that violates a domain invariant (unnormalized row,
    duplicate manifest id, incompatible vocabulary, ...)."""


class InfeasibleTargetError(ValidationError):
    """A loss was requested for a target sequence no alignment can produce."""


class DecodeFailure(RodecError):
    """A decoder could not produce any finished hypothesis."""
