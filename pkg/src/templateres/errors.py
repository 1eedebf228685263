"""Exception types shared across the package."""


class TemplateResError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(TemplateResError, ValueError):
    """An argument violates a documented precondition."""


class InvalidTransformError(InvalidInputError):
    """A spatial transform is degenerate or otherwise unusable."""


class FormatError(TemplateResError, ValueError):
    """A file does not conform to its declared on-disk format."""
