"""Exception hierarchy shared by all pesinlab modules."""


class PesinLabError(Exception):
    """Base class for every error raised by the library."""


class PreconditionError(PesinLabError, ValueError):
    """An operation was called outside its documented domain."""


class DegenerateTransform(PreconditionError):
    pass


class PunctureHit(PreconditionError):
    pass


class HypothesisViolated(PreconditionError):
    pass


class ResolutionTooCoarse(PreconditionError):
    pass


class WrongNormalization(PreconditionError):
    pass


class EllipticRotation(PreconditionError):
    pass


class BackendUnavailable(PesinLabError):
    pass


class NonPositiveValue(PreconditionError):
    pass


class RootFindingError(PesinLabError):
    """Root polishing did not reach the requested residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StepTooLarge(PesinLabError):
    """Newton correction failed along a continuation path.

    The caller is expected to refine the path and retry.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class CriticalProximity(PesinLabError):
    """Continuation reached a point where the derivative nearly vanishes."""

    def __init__(self, message, index=None, point=None):
        super().__init__(message)
        self.index = index
        self.point = point


class CriticalFiber(PesinLabError):
    pass


class CriticalFiberHit(PesinLabError):
    pass


class VerificationFailed(PesinLabError):
    pass


class OrbitEscaped(PesinLabError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class AllCensored(PesinLabError):
    pass


class EmptyShell(PesinLabError):
    pass


class Inconclusive(PesinLabError):
    pass


class BranchUndefined(PesinLabError):
    pass


class ScheduleNeverStarts(PesinLabError):
    pass


class BranchObstructed(PesinLabError):
    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = level


class InsufficientDepth(PreconditionError):
    pass


class ReturnTimeBlowup(PesinLabError):
    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats or {}


class BudgetExhausted(PesinLabError):
    pass


class TowerFailure(PesinLabError):
    pass


class SchemaError(PesinLabError, ValueError):
    """Scenario text failed validation; ``path`` names the offending key."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class CriticalOnCircle(PesinLabError):
    """|g'| vanished at a quadrature node on the unit circle."""


class ExperimentFailed(PesinLabError):
    """A module error raised while running a scenario, with the scenario named."""

    def __init__(self, message, scenario=None, cause=None):
        super().__init__(message)
        self.scenario = scenario
        self.cause = cause
