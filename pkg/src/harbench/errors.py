"""Exception hierarchy shared by all modules."""


class HarbenchError(Exception):
    """Base class for toolkit errors."""


class ConfigError(HarbenchError, ValueError):
    """Malformed or invalid manifest / experiment configuration."""


class DataError(HarbenchError):
    """Trial files that are missing, unreadable or contain bad samples."""


class TrainingError(HarbenchError, FloatingPointError):
    """Optimisation diverged (non-finite loss or parameters)."""
