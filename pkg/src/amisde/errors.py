"""Exception types shared across the package."""


class AmisError(Exception):
    """Base class for all amisde errors."""


class SimulationError(AmisError):
    """A simulated state became non-finite.

    Attributes
    ----------
    step_index : int
        Index of the Euler-Maruyama step at which the blow-up occurred.
    """

    def __init__(self, step_index: int, message: str | None = None):
        self.step_index = step_index
        super().__init__(message or f"non-finite state at step {step_index}")


class StructuralError(AmisError):
    """A path, store or argument has an inconsistent shape or is missing
    required data (e.g. noise increments, grid mismatch)."""


class UnsupportedFormError(AmisError):
    """The operation requires the cost form of the target functional."""


class InvalidDiscardTimeError(AmisError):
    """Discard time outside {0, ..., k-1}."""


class UndefinedEssError(AmisError):
    """ESS is undefined because every weighted value is zero."""


class UndefinedResultError(AmisError):
    """A weighted mean has no positive term."""


class ConfigurationError(AmisError):
    """Invalid or inconsistent run configuration."""


class EngineError(AmisError):
    """Failure inside the AMIS loop, annotated with the iteration index.

    Attributes
    ----------
    iteration : int
        1-based iteration at which the wrapped failure happened.
    """

    def __init__(self, iteration: int, message: str):
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}")
