"""Exception hierarchy shared by the bicon modules."""


class BiconError(Exception):
    """Base class for every error raised by this package."""


class InputError(BiconError, ValueError):
    """Malformed or out-of-range input (non-finite positions, asymmetric matrix, eps <= 0...)."""


class DomainError(BiconError):
    """A well-formed request that has no meaningful answer."""


class PreconditionError(DomainError):
    """An operation was called on a graph that violates its precondition."""


class DegenerateGraphError(DomainError):
    """Graph too small for the requested notion (e.g. biconnectivity with n < 3)."""


class DegenerateColumnError(DomainError):
    """A shifted Laplacian column is zero, so its projector is undefined."""


class EstimationError(BiconError):
    """Eigenvalue or eigenvector estimation failed."""


class NonConvergenceError(EstimationError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InstabilityError(EstimationError):
    def __init__(self, message, hk=None):
        super().__init__(message)
        self.hk = hk


class SimulationFault(BiconError):
    def __init__(self, message, agent=None):
        super().__init__(message)
        self.agent = agent


class ConfigurationError(BiconError):
    """Scenario configuration is malformed or describes an invalid world."""
