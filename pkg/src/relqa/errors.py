"""Exception hierarchy shared across the package."""


class RelQAError(Exception):
    """Base class for all package errors."""


class ShapeError(RelQAError, ValueError):
    pass


class NonFiniteError(RelQAError, FloatingPointError):
    """A NaN or Inf appeared at an op boundary."""


class DetachedError(RelQAError, RuntimeError):
    """backward() called on a tensor that is not on a live tape."""


class ValidationError(RelQAError, ValueError):
    pass


class GraphFormatError(ValidationError):
    pass


class CheckpointError(ValidationError):
    pass


class EmbeddingError(ValidationError):
    pass
