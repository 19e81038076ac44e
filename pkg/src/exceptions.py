from config.constants import (
    EXIT_CONFIG_ERROR,
    EXIT_GATE_FAILURE,
    EXIT_IO_ERROR,
    EXIT_NUMERIC_ERROR,
)


class AngioditError(Exception):
    """
    Base class for every error the pipeline raises on purpose.
    """

    exit_code = 1


class ShapeError(AngioditError, ValueError):
    """
    A tensor violates the extents an operation requires.
    """


class ConfigError(AngioditError):
    exit_code = EXIT_CONFIG_ERROR

    def __init__(self, message: str, key_path: str = ""):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)


class ArtifactIOError(AngioditError, OSError):
    exit_code = EXIT_IO_ERROR


class NumericError(AngioditError, ArithmeticError):
    exit_code = EXIT_NUMERIC_ERROR


class GateFailure(AngioditError):
    exit_code = EXIT_GATE_FAILURE


class ProbeNotTrainedError(AngioditError, RuntimeError):
    pass


class DatasetError(AngioditError, ValueError):
    """
    The corpus cannot satisfy a dataset operation (too few reports to split).
    """
