"""Exception hierarchy shared by the solver modules."""


class NetworkError(ValueError):
    """The input network is malformed or violates a model assumption."""


class NotSeriesParallelError(NetworkError):
    """The network cannot be reduced to a single arc by series/parallel steps."""


class InfeasibleError(ValueError):
    """Parameters admit no valid configuration (e.g. non-uniform demands)."""


class InvariantError(AssertionError):
    """An internal consistency check failed; indicates a solver bug."""
