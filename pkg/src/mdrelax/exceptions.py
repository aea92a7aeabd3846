"""Exception hierarchy shared by all modules."""


class MdrkError(Exception):
    """Base class for all library errors."""


class EvaluationError(MdrkError):
    """A right-hand side or derivative produced non-finite output."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DualDepthError(MdrkError):
    """Nested dual arithmetic exceeded the supported depth."""


class StepFailure(MdrkError):
    """A time step could not be completed."""

    def __init__(self, message, stage=None, residual=None):
        super().__init__(message)
        self.stage = stage
        self.residual = residual


class NewtonConvergenceError(StepFailure):
    """Newton iteration for the implicit stages did not converge."""


class GmresStagnation(StepFailure):
    """The inner GMRES solve stagnated before reaching its tolerance."""


class UnsupportedOperation(MdrkError):
    """Requested operation is not available for this tableau or problem."""


class DegenerateDirection(MdrkError):
    """The relaxation search direction is (numerically) zero."""


class RelaxationFailure(MdrkError):
    """No admissible relaxation parameter could be found."""
