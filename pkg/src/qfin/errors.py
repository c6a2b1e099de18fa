class QfinError(Exception):
    """Base class for errors raised by this package."""


class ParseError(QfinError, ValueError):
    pass


class TransportError(QfinError):
    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message)
        self.status_code = status_code
