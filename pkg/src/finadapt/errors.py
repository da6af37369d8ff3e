"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: anything deriving from InputDataError is
an input problem (exit 2), anything deriving from BackendError is an inference
backend problem (exit 3).
"""


class FinadaptError(Exception):
    """Base class for all toolkit errors."""


class InputDataError(FinadaptError):
    """A user-supplied file, record, or argument is missing or malformed."""


class BackendError(FinadaptError):
    """The inference backend failed or cannot satisfy the request."""
