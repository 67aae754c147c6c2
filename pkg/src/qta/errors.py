"""Exception types shared across the toolkit."""


class QTAError(Exception):
    """Base class for all toolkit errors."""


class InvalidParameter(QTAError, ValueError):
    pass


class TailTooHeavy(QTAError, ValueError):
    """Truncated photon-number tail exceeds the allowed mass."""


class NotNormalized(QTAError, ValueError):
    pass


class PathExplosion(QTAError, RuntimeError):
    """Too many candidate reflection paths to enumerate."""


class NyquistViolation(QTAError, ValueError):
    pass


class FormatError(QTAError, ValueError):
    """Malformed circuit, scenario or distribution file.

    ``field`` names the offending entry (dotted path) when known.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
