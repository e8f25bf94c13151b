"""Exception types shared across the toolkit."""


class TorusavgError(Exception):
    """Base class for toolkit errors."""


class HypothesisError(TorusavgError):
    """A mathematical hypothesis required by an operation fails (e.g. lower
    order Melnikov functions do not vanish when an averaged function is
    requested)."""


class SolverError(TorusavgError):
    """An iterative solver failed to converge (Newton shooting, adaptive
    quadrature, eigen-decomposition post-checks)."""


class GuardError(TorusavgError):
    """A validity guard tripped: the requested computation is outside the
    regime where the underlying construction is defined (e.g. the angular
    reduction requires a positive angular speed)."""


class BlowupError(TorusavgError):
    """A trajectory left the admissible region (non-finite state or a
    component beyond the blow-up bound)."""

    def __init__(self, message, iterate=None, time=None):
        super().__init__(message)
        self.iterate = iterate
        self.time = time


class NonFiniteError(TorusavgError):
    """Evaluation produced a non-finite value (division by zero, overflow)."""
