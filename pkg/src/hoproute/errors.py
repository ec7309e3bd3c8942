"""Exception types shared across the package."""


class HopRouteError(Exception):
    """Base class for all errors raised by hoproute."""


class UnknownEdge(HopRouteError, KeyError):
    pass


class DegenerateGraph(HopRouteError, ValueError):
    pass


class GraphFormatError(HopRouteError, ValueError):
    pass


class AspectRatioError(HopRouteError, ValueError):
    pass


class NodeNotEmbedded(HopRouteError, KeyError):
    pass


class InvalidTree(HopRouteError, ValueError):
    pass


class InvalidEpsilon(HopRouteError, ValueError):
    pass


class EmptyGraph(HopRouteError, ValueError):
    pass


class HopCapExceeded(HopRouteError, RuntimeError):
    pass


class BadDistribution(HopRouteError, ValueError):
    pass


class NoConvergence(HopRouteError, RuntimeWarning):
    """Issued as a warning: the MWU loop ran out of rounds above its target."""


class RetriesExhausted(HopRouteError, RuntimeError):
    pass


class NodePairInvalid(HopRouteError, ValueError):
    pass


class SolverFailure(HopRouteError, RuntimeError):
    pass


class TooLarge(HopRouteError, ValueError):
    pass


class UnknownGenerator(HopRouteError, KeyError):
    pass
