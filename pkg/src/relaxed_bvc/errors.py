"""Exception hierarchy shared by every module."""


class UsageError(ValueError):
    """Caller supplied invalid arguments (bad shapes, non-finite values, ...)."""


class ConfigurationError(UsageError):
    """A protocol or experiment configuration violates a stated precondition."""


class SolverError(RuntimeError):
    """A numerical routine failed to converge.

    Distinct from an infeasibility verdict: it means "no answer", not "no point".
    ``best_bound`` carries the best objective value reached, when one exists.
    """

    def __init__(self, message, best_bound=None):
        super().__init__(message)
        self.best_bound = best_bound


class DegenerateSimplexError(UsageError):
    """The d+1 given points do not span a d-dimensional simplex."""
