"""Exception hierarchy shared by every module."""

from __future__ import annotations


class MegdtError(Exception):
    """Base class for all simulator errors."""


class InvalidShapeError(MegdtError, ValueError):
    pass


class ShapeMismatchError(MegdtError, ValueError):
    pass


class InvalidValueError(MegdtError, ValueError):
    pass


class DomainError(MegdtError, ValueError):
    pass


class PayloadSizeError(MegdtError, ValueError):
    pass


class InvalidConfigError(MegdtError, ValueError):
    """Raised for malformed configuration; ``path`` locates the offending field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
