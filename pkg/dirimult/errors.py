"""Exceptions raised by dirimult.

Every error carries the same payload shape: a short ``message``, a
``reason`` and any context keys (``path``, ``line``, ``column``,
``site_id`` ...). ``as_dict()`` returns that payload for logging.
"""


class DirimultError(Exception):
    exit_code = 1

    def __init__(self, message, reason="", **context):
        super().__init__(f"{message} {reason}".strip())
        self.message = message
        self.reason = reason
        self.context = context

    def as_dict(self):
        return {"message": self.message, "reason": self.reason, **self.context}


class ValidationError(DirimultError):
    """Malformed input or a broken precondition."""

    exit_code = 1


class NoEvidenceError(ValidationError):
    """A query without a single counted item."""


class InvariantViolation(DirimultError):
    """A post-condition the code guarantees did not hold."""

    exit_code = 2
