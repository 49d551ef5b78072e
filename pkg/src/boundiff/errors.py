"""Exception types shared across the library.

Plain argument/precondition violations raise ``ValueError`` directly; the
classes below mark failures that callers (and the CLI exit-code mapping)
need to tell apart.
"""


class ConfigurationError(ValueError):
    """Invalid configuration value, unknown option, or infeasible setup."""


class ShapeError(ValueError):
    """Operand shapes do not conform to the requested tensor operation."""


class ModelError(RuntimeError):
    """Model/input dimension mismatch or invalid model state."""


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""


class CheckpointError(RuntimeError):
    """Checkpoint file is malformed, truncated, or inconsistent."""


class DataError(RuntimeError):
    """Dataset file is malformed or inconsistent with its metadata."""
