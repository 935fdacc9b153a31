"""Shared exception types.

The CLI maps InputError to exit code 2 and InvariantViolation (plus failed
audits) to exit code 1; everything else is a plain crash.
"""


class BuybackError(Exception):
    """Base class for all errors raised by this package."""


class InputError(BuybackError):
    """Malformed input: unknown element ids, bad descriptors, bad JSON."""


class PreconditionError(BuybackError):
    """An operation was called on state that violates its precondition."""


class UnsupportedOperation(BuybackError):
    """Operation not defined for this descriptor (e.g. rank of a set family)."""


class SizeError(BuybackError):
    """Input too large for an exhaustive operation."""


class InvariantViolation(BuybackError):
    """An internal consistency check failed; indicates a bug, not bad input."""


class ProtocolError(BuybackError):
    """An algorithm under adversarial test broke the interaction protocol."""
