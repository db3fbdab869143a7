"""Exception hierarchy shared by all modules."""


class AvgSimError(Exception):
    """Base class for toolkit errors."""


class InvalidParams(AvgSimError, ValueError):
    pass


class ParityError(InvalidParams):
    pass


class EmptyGraph(InvalidParams):
    pass


class ConfigError(AvgSimError, ValueError):
    pass


class DeltaOutOfRange(ConfigError):
    pass


class InvalidEdge(AvgSimError, ValueError):
    pass


class RetryExhausted(AvgSimError):
    pass


class NotConverged(AvgSimError):
    pass


class DegenerateGap(AvgSimError):
    pass


class NotYetReached(AvgSimError):
    pass


class ZeroAlpha2(AvgSimError):
    pass


class MissingObserver(AvgSimError):
    pass


class ScheduleTooShort(AvgSimError):
    pass


class InvariantBreach(AvgSimError):
    """A runtime check of a mathematical invariant failed."""
