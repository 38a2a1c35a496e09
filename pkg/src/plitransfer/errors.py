"""Exception hierarchy. The CLI maps these onto exit codes."""


class PLITransferError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(PLITransferError, ValueError):
    pass


class StateError(PLITransferError, RuntimeError):
    """An operation was called before the state it needs exists (e.g. backward before forward)."""


class ConfigError(PLITransferError, ValueError):
    pass


class DataError(PLITransferError, ValueError):
    """Bad or unusable input data: missing columns, unparseable cells, domain violations."""


class NumericError(PLITransferError, ArithmeticError):
    """Non-finite values, singular systems, diverged training."""


class DivergenceError(NumericError):
    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class DegenerateBatchError(ShapeError):
    """Batch-norm in train mode received a single row."""
