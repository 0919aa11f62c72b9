"""Exception types shared across the package."""


class LwfieldError(Exception):
    pass


class SmoothnessError(LwfieldError):
    """A trajectory is missing a derivative evaluator."""


class AdmissibilityError(LwfieldError, ValueError):
    """A sampled speed reached or exceeded the speed of light."""


class ContractionError(LwfieldError):
    """The retarded-time map is not a contraction (velocity bound >= 1)."""


class SingularityError(LwfieldError):
    """Observation point sits on the source trajectory."""


class HistoryError(LwfieldError):
    """Query outside the committed part of an n-body history."""


class CollisionError(LwfieldError):
    """Two bodies came closer than the collision threshold."""


class StepError(LwfieldError):
    """Integrator step rejected (too large, or Picard iteration diverged)."""


class SymbolicError(LwfieldError):
    """Errors raised by the polynomial engine and script runner."""


class ScriptSyntaxError(SymbolicError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = f" (line {line}, col {col})" if line is not None else ""
        super().__init__(message + where)
