"""Error types shared across the package."""


class ModelError(ValueError):
    """Base class for model construction and validation failures."""


class NotPositiveDefiniteError(ModelError):
    """A matrix required to be positive definite is not.

    Carries the order of the first offending leading principal minor.
    """

    def __init__(self, name: str, minor_order: int):
        self.name = name
        self.minor_order = minor_order
        super().__init__(
            f"{name} is not positive definite: leading principal minor of "
            f"order {minor_order} is not positive"
        )


class SingularModelError(ModelError):
    """A matrix that must be inverted along the pipeline is singular."""

    def __init__(self, what: str, step: int | None = None):
        self.what = what
        self.step = step
        msg = f"singular {what}"
        if step is not None:
            msg += f" at step {step}"
        super().__init__(msg)


class ConfigError(ValueError):
    """Raised when a scenario configuration fails validation."""
