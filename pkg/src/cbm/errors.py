"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid configuration value or document. CLI exit code 2."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or parameter. CLI exit code 3."""

    def __init__(self, message: str, *, seed: int, epoch: int, batch: int | None = None):
        super().__init__(message)
        self.seed = seed
        self.epoch = epoch
        self.batch = batch
