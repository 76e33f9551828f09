"""Exception hierarchy.

Everything raised for bad input derives from :class:`ValidationError`; the
CLI maps it to exit code 1 and ``OSError`` to exit code 2.
"""


class ValidationError(ValueError):
    pass


class InvalidTransform(ValidationError):
    pass


class BehindCamera(ValidationError):
    pass


class NonPositiveDepth(ValidationError):
    pass


class EmptyWindow(ValidationError):
    pass


class MismatchedGrids(ValidationError):
    pass


class OutOfBounds(ValidationError):
    pass


class IndivisibleShape(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class ChannelMismatch(ValidationError):
    pass


class SpecMismatch(ValidationError):
    pass


class EmptyBatch(ValidationError):
    pass


class SceneKeyMismatch(ValidationError):
    pass


class SchemaError(ValidationError):
    """Malformed input document; ``pointer`` is a JSON pointer to the bad node."""

    def __init__(self, pointer, message):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")
