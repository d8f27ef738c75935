"""Exception hierarchy shared by the library, the CLI and the scoring service.

Each class carries the process exit code the CLI uses for it:
2 for configuration problems, 3 for data problems, 4 for numeric aborts.
Errors raised in ablation worker processes are pickled back to the parent,
so classes with extra constructor arguments define ``__reduce__``.
"""
from typing import Optional, Sequence


class AAViTError(Exception):
    exit_code: int = 1


class ConfigError(AAViTError):
    exit_code = 2


class DimensionError(ConfigError, ValueError):
    """Operand shapes do not line up."""


class ParameterError(ConfigError, ValueError):
    """An operator argument is outside its valid range."""


class ContractError(ConfigError, ValueError):
    """A precondition of an operation was violated by the caller."""


class CheckpointError(ConfigError):
    """Bad magic, unsupported format version, or config mismatch."""


class DataError(AAViTError):
    exit_code = 3


class EmptySplitError(DataError, ContractError):
    """The manifest has no rows for a split the command needs."""


class ParseError(DataError):
    def __init__(self, message: str, offset: int, path: Optional[str] = None):
        self.message = message
        self.offset = offset
        self.path = path
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{message} at byte offset {offset}")

    def __reduce__(self):
        return type(self), (self.message, self.offset, self.path)


class ManifestValidationError(DataError):
    def __init__(self, message: str, offenders: Sequence[str] = ()):
        self.message = message
        self.offenders = list(offenders)
        if self.offenders:
            message = f"{message}: {', '.join(self.offenders)}"
        super().__init__(message)

    def __reduce__(self):
        return type(self), (self.message, self.offenders)


class UndefinedMetricError(DataError, ValueError):
    """A rate was requested over an empty class."""


class UnknownSampleError(DataError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown sample"


class NumericError(AAViTError, ArithmeticError):
    exit_code = 4

    def __init__(self, message: str, step: Optional[int] = None):
        self.message = message
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)

    def __reduce__(self):
        return type(self), (self.message, self.step)
