"""Exception types shared across the package.

The CLI maps these onto process exit codes, so every numerical failure should
raise a subclass of :class:`NumericalError` and every refusal on resource
grounds a :class:`ResourceGuardError`.
"""


class DissipChaosError(Exception):
    pass


class DimensionError(DissipChaosError, ValueError):
    """Operator or space dimensions are inconsistent."""


class NumericalError(DissipChaosError):
    """A computation produced an unusable numerical result."""


class BiorthogonalityError(NumericalError):
    """Left/right eigenvectors of a (near-)defective cluster cannot be paired."""

    def __init__(self, message, cluster=None):
        super().__init__(message)
        self.cluster = [] if cluster is None else list(cluster)


class MultipleSteadyStatesError(NumericalError):
    pass


class DegenerateStateError(NumericalError):
    pass


class StepSizeError(NumericalError):
    pass


class BlowUpError(NumericalError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ConvergenceError(NumericalError):
    pass


class ResourceGuardError(DissipChaosError):
    """Refusal to allocate a problem larger than the configured guard."""
