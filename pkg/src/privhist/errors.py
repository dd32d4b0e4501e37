"""Exception types shared across the package."""


class PrivhistError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(PrivhistError, ValueError):
    """A caller-supplied parameter violates an operation's preconditions."""


class PolicyError(PrivhistError):
    """A privacy policy is missing, malformed, or does not cover the request."""


class PublishConflictError(PolicyError):
    """A mutation was attempted on a published (frozen) table."""


class AccessDeniedError(PrivhistError):
    """The caller's role does not permit the requested operation."""


class NotFoundError(PrivhistError):
    """A referenced table or column does not exist."""
