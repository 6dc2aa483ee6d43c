"""Exception taxonomy shared across the package."""


class LabnetError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(LabnetError, ValueError):
    """Tensor shapes violate an operation's contract."""


class ArgumentError(LabnetError, ValueError):
    """An argument is outside an operation's accepted domain."""


class NumericError(LabnetError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class ConfigError(LabnetError, ValueError):
    """A run configuration is invalid or inconsistent."""


class DatasetError(LabnetError):
    """A dataset root cannot be scanned or resolved into triples."""


class EvalInputError(LabnetError):
    """Predictions and ground truth do not line up for evaluation."""


class StateError(LabnetError):
    """Optimizer state and parameters are out of step."""


class TrainingDiverged(LabnetError):
    """The training loss became non-finite."""
