"""Exception types shared across the package."""


class JacpredError(Exception):
    """Base class for all package errors."""


class ShapeError(JacpredError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(JacpredError):
    """A caller violated an operation's precondition."""


class NumericGuardError(JacpredError):
    """A numeric guard tripped (e.g. unregularized division by ~0)."""


class SingularMatrixError(NumericGuardError):
    """Matrix inversion hit a numerically singular input."""


class DegenerateBatchError(ContractError):
    """A batch statistic was requested on a batch that is too small."""


class TrainingAbortedError(JacpredError):
    """Training stopped because gradients or losses became non-finite."""


class FormatError(JacpredError):
    """A serialized file is malformed.

    Carries the byte offset at which decoding failed.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(JacpredError):
    """An experiment configuration failed validation."""
