"""Exception hierarchy shared by all modules."""


class ReinforcedLoopsError(Exception):
    """Base class for library errors."""


class GraphError(ReinforcedLoopsError):
    """Malformed graph input or invalid graph object."""


class OracleLimitError(ReinforcedLoopsError):
    """A brute-force oracle was asked to work beyond its size cap."""


class InvalidTreeError(ReinforcedLoopsError):
    """An edge set that is not a spanning tree of the graph."""


class ConditioningError(ReinforcedLoopsError):
    """A determinant or factorisation is numerically unusable."""


class SingularityError(ConditioningError):
    """A restricted matrix could not be inverted."""


class StepCapError(ReinforcedLoopsError):
    """A simulation exceeded its jump cap before its stop condition."""


class BudgetError(ReinforcedLoopsError):
    """An integrator ran out of nodes before reaching its tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class TuningError(ReinforcedLoopsError):
    """MCMC acceptance rate ended outside the admissible window."""


class SingularBodyError(ReinforcedLoopsError):
    """Grassmann function requested at a zero body."""


class RegistryError(ReinforcedLoopsError):
    """Unknown check id or invalid check configuration."""


class ConsistencyError(ReinforcedLoopsError):
    """Internal bookkeeping invariant violated."""
