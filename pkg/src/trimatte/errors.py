"""Exception categories shared across the package (the CLI maps them to exit codes)."""


class ConfigError(ValueError):
    """Invalid configuration, detected before any compute."""


class FormatError(ValueError):
    """A file or byte stream does not match its declared format."""


class CheckpointError(ValueError):
    """A checkpoint is truncated, has the wrong version, or does not fit the model."""


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss."""
