"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class DmadError(Exception):
    exit_code = 1


class ValidationError(DmadError, ValueError):
    """Input violates a documented invariant or precondition."""

    exit_code = 2


class FormatError(DmadError):
    """A file could not be parsed (bad magic, truncated payload, bad record)."""

    exit_code = 3


class MissingFileError(FormatError, FileNotFoundError):
    exit_code = 3


class StageError(DmadError):
    """An upstream pipeline artifact is missing."""

    exit_code = 3

    def __init__(self, stage, path):
        super().__init__(f"missing artifact {path}; run the '{stage}' stage first")
        self.stage = stage
        self.path = path


class NumericError(DmadError, ArithmeticError):
    exit_code = 4
