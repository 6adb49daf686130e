"""Exception hierarchy shared by the model, solvers and I/O layer."""


class UavCrnError(Exception):
    """Base class for every error raised by this package."""


class ModelError(UavCrnError):
    pass


class EveExclusionViolated(ModelError):
    """A UAV position lies strictly inside an eavesdropper's uncertainty disc."""

    def __init__(self, eve_index, distance, radius):
        self.eve_index = eve_index
        self.distance = distance
        self.radius = radius
        super().__init__(
            f"UAV position is {distance:.6g} m from eavesdropper {eve_index} estimate, "
            f"inside its uncertainty radius {radius:.6g} m"
        )


class DegenerateDistance(ModelError):
    """Worst-case ground distance |d_hat - r| collapsed to (nearly) zero."""


class InfeasibleScenario(UavCrnError):
    """No feasible (trajectory, power) pair exists for the scenario."""


class ReferenceInfeasible(UavCrnError):
    """A reference trajectory handed to the trajectory subproblem is unusable."""


class SolverFailure(UavCrnError):
    """The convex engine returned a non-finite or otherwise unusable iterate."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ScenarioError(UavCrnError, ValueError):
    pass


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
