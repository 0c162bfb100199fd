"""Exception types shared across the package."""


class SurformerError(Exception):
    """Base class for all package errors."""


class DimensionError(SurformerError, ValueError):
    pass


class ConfigurationError(SurformerError, ValueError):
    pass


class ParameterError(SurformerError, ValueError):
    pass


class LabelError(SurformerError, ValueError):
    pass


class BatchTooSmallError(SurformerError, ValueError):
    pass


class EmptyInputError(SurformerError, ValueError):
    pass


class InputTooSmallError(SurformerError, ValueError):
    pass


class InsufficientDataError(SurformerError, ValueError):
    pass


class NonFiniteGradientError(SurformerError, FloatingPointError):
    pass


class GradientCheckError(SurformerError, FloatingPointError):
    pass


class DivergenceError(SurformerError, FloatingPointError):
    pass


class DegenerateFitError(SurformerError, ValueError):
    pass


class LoadError(SurformerError, ValueError):
    pass


class StateError(SurformerError, RuntimeError):
    pass


class DegenerateFitWarning(UserWarning):
    """A fit produced a trivial model (no splits, single class)."""
