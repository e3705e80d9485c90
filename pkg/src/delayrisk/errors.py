"""Exception hierarchy shared by all delayrisk modules."""


class DelayRiskError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(DelayRiskError, ValueError):
    """An argument lies outside its admissible range."""


class ConnectivityError(DelayRiskError):
    """The communication graph is not connected."""


class InvalidEdgeError(DelayRiskError, ValueError):
    """Self-loop, duplicate edge, out-of-range endpoint or non-positive weight."""


class NumericalError(DelayRiskError, ArithmeticError):
    """A linear-algebra step failed or produced an inadmissible result."""


class InvalidLaplacianError(NumericalError):
    """The matrix handed to the eigensolver is not a connected-graph Laplacian."""


class DegenerateGraphError(DelayRiskError):
    """The graph has no non-zero Laplacian eigenvalue."""


class StabilityError(DelayRiskError):
    """The delay violates tau < pi / (2 lambda_max)."""


class DegenerateError(DelayRiskError):
    """A quantity needs a strictly positive variance that is zero."""


class AgentIndexError(DelayRiskError, IndexError):
    """An agent label is out of range or collides with a failed agent."""


class SingularConditioningError(NumericalError):
    """The covariance block of the failed agents is singular or ill-conditioned."""

    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class DegenerateUpdateError(DegenerateError):
    """The newly failed agent has zero conditional variance."""


class DivergenceError(DelayRiskError):
    """The simulated state blew up."""

    def __init__(self, message, step, trial):
        super().__init__(message)
        self.step = step
        self.trial = trial


class InsufficientAcceptanceError(DelayRiskError):
    """Too few rejection samples survived the conditioning band."""

    def __init__(self, message, accepted, acceptance_rate):
        super().__init__(message)
        self.accepted = accepted
        self.acceptance_rate = acceptance_rate


class ConfigError(DelayRiskError):
    """A scenario configuration failed validation.

    ``errors`` holds every violation found, not only the first one.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
