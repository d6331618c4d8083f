"""Exception types shared across the library."""


class ConfigError(ValueError):
    """Invalid configuration value; ``key_path`` names the offending entry."""

    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


class DegenerateRayError(ValueError):
    """The query point coincides with the camera's ground projection."""


class PlacementError(RuntimeError):
    """Scene sampling exhausted its rejection budget."""


class NumericalError(ArithmeticError):
    """A numerical routine produced a non-finite value.

    ``iteration`` is the step index at which the divergence was detected,
    or None when not applicable.
    """

    def __init__(self, message: str, iteration: int | None = None):
        self.iteration = iteration
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
