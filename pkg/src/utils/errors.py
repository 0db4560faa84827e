"""Error kinds raised across the package.

Each kind subclasses the builtin exception a caller would naturally catch, so
``except ValueError`` still works for argument and data problems.
"""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's precondition."""


class InvalidDataError(ValueError):
    """Input data is inconsistent with what an operation needs (e.g. an empty class)."""


class InvalidInputError(ValueError):
    """Numeric input is unusable, e.g. NaN or infinite logits."""


class UnsupportedOperationError(NotImplementedError):
    """The operation is not defined for the given input kind."""


class TrainingDivergenceError(RuntimeError):
    """The training loss became non-finite."""


class ConfigHashMismatchError(ValueError):
    """A checkpoint was produced under a different configuration."""
