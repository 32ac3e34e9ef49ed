"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called outside its documented contract."""


class CorpusFormatError(ValueError):
    """A corpus file could not be parsed; carries the offending line number."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class CheckpointError(ValueError):
    """A checkpoint file is missing metadata or has inconsistent shapes."""


class ConfigError(ValueError):
    """An experiment config is invalid (bad key, value, or combination)."""


class NonConvergenceError(RuntimeError):
    """Training failed to reach its target; carries the last metrics seen."""

    def __init__(self, message, metrics=None):
        super().__init__(message)
        self.metrics = metrics or {}


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the last finite-loss parameters."""

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good
